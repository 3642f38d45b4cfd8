import os

import numpy as np
import pytest
import torch

from cospeech.graphs import face_graphs, pose_graphs
from cospeech.layouts import mini_face_layout, mini_pose_layout, mini_template_face
from cospeech.nn.networks import DimensionPlan

torch.set_num_threads(1)
os.environ.pop("COSPEECH_WORKERS", None)


def random_rotation(rng):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-np.pi, np.pi)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mini():
    face = mini_face_layout()
    pose = mini_pose_layout()
    template = mini_template_face()
    return {
        "face": face,
        "pose": pose,
        "template": template,
        "skeleton": pose.skeleton,
        "face_graphs": face_graphs(face, template),
        "pose_graphs": pose_graphs(pose),
        "plan": DimensionPlan.miniature(),
    }


ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"ACCEPTANCE {n} {'PASS' if passed else 'FAIL'}: {detail}")
