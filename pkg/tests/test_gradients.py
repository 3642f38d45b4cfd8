import pytest

from helpers import REL_TOL, gradient_cases, run_case

NAMES = [
    "audio_encoder", "text_encoder", "speaker_encoder", "face_encoder", "pose_encoder",
    "face_decoder", "pose_decoder", "generator_audio_to_face", "discriminator", "discriminator_input",
    "phoneme_predictor", "loss_phoneme", "loss_reconstruction", "loss_csd", "loss_adversarial_G",
    "loss_adversarial_D", "loss_adversarial_G_logits", "loss_adversarial_D_logits",
]


@pytest.fixture(scope="module")
def cases(mini):
    return gradient_cases(mini)


def test_case_list_complete(cases):
    assert sorted(cases) == sorted(NAMES)


@pytest.mark.parametrize("name", NAMES)
def test_finite_difference_gradient(cases, name):
    assert run_case(cases[name]) < REL_TOL
