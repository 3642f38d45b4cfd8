"""Joint positions to rotations, lip superposition, and animation export.

Quaternions are ``(w, x, y, z)``. A rotation sequence is ``(T, J, 4)``:
entry 0 is the root (identity, the root has no orientation data) and entry
``b + 1`` is the local rotation of bone ``b``, relative to the global
rotation of the bone ending at its source joint. Each bone's global
rotation takes its rest direction to its observed direction by the
shortest arc, since joint positions carry no roll information.
"""

import base64
import json
import warnings

import numpy as np

from .exceptions import AmbiguousTwistWarning, IndexOverlap, ShapeMismatch
from .motion import units_to_pose

ANIMATION_FORMAT = "cospeech-animation"
ANIMATION_VERSION = 1

ANIMATION_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "frame_rate", "frame_count", "skeleton", "rotations", "landmarks"],
    "properties": {
        "format": {"const": ANIMATION_FORMAT},
        "version": {"const": ANIMATION_VERSION},
        "frame_rate": {"type": "number", "exclusiveMinimum": 0},
        "frame_count": {"type": "integer", "minimum": 0},
        "skeleton": {
            "type": "object",
            "required": ["parent_index", "bone_lengths"],
            "properties": {
                "parent_index": {"type": "array", "items": {"type": "integer"}},
                "bone_lengths": {"type": "array", "items": {"type": "number"}},
            },
        },
        "rotations": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
            },
        },
        "landmarks": {
            "type": "object",
            "required": ["dtype", "shape", "encoding", "data"],
            "properties": {
                "dtype": {"const": "float32"},
                "shape": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 3, "maxItems": 3},
                "encoding": {"const": "base64"},
                "data": {"type": "string"},
            },
        },
        "windows": {
            "type": "object",
            "required": ["size", "offsets"],
            "properties": {
                "size": {"type": "integer"},
                "offsets": {"type": "array", "items": {"type": "integer"}},
            },
        },
    },
}


# quaternion helpers ---------------------------------------------------------

def quat_mul(a, b):
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q):
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_rotate(q, v):
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_canonical(q):
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(q[..., :1] < 0, -q, q)


def _dominant_perpendicular(a):
    axis = np.zeros(3)
    axis[np.argmin(np.abs(a))] = 1.0
    perp = axis - a * (axis @ a)
    return perp / np.linalg.norm(perp)


def shortest_arc(a, b, eps=1e-9):
    """Quaternions rotating unit vectors ``a`` onto ``b`` (both ``(..., 3)``)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b / np.linalg.norm(b, axis=-1, keepdims=True)
    a_b, b_b = np.broadcast_arrays(a, b)
    dot = np.sum(a_b * b_b, axis=-1, keepdims=True)
    q = np.concatenate([1.0 + dot, np.cross(a_b, b_b)], axis=-1)
    flip = (1.0 + dot[..., 0]) < eps
    if np.any(flip):
        warnings.warn("bone antiparallel to its rest direction; twist axis chosen arbitrarily",
                      AmbiguousTwistWarning, stacklevel=2)
        for idx in zip(*np.nonzero(flip)):
            q[idx] = np.concatenate([[0.0], _dominant_perpendicular(a_b[idx])])
    return quat_canonical(q)


# FABRIK ---------------------------------------------------------------------

def fabrik_chain(positions, lengths, target, tol=1e-4, max_iters=20):
    """Solve one chain rooted at ``positions[0]``.

    Returns ``(positions, iterations, errors)`` where ``errors[i]`` is the
    end-effector distance after ``i`` iterations (``errors[0]`` is the
    starting error). Out-of-reach targets straighten the chain toward them.
    """
    p = np.array(positions, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if p.shape != (lengths.size + 1, 3):
        raise ShapeMismatch("need one more joint than bone lengths")
    base = p[0].copy()
    err = float(np.linalg.norm(p[-1] - target))
    errors = [err]
    if np.linalg.norm(target - base) >= lengths.sum():
        for i, l in enumerate(lengths):
            d = target - p[i]
            p[i + 1] = p[i] + l * d / np.linalg.norm(d)
        errors.append(float(np.linalg.norm(p[-1] - target)))
        return p, 1, errors
    it = 0
    while err > tol and it < max_iters:
        p[-1] = target
        for i in range(lengths.size - 1, -1, -1):
            d = p[i] - p[i + 1]
            p[i] = p[i + 1] + lengths[i] * d / np.linalg.norm(d)
        p[0] = base
        for i in range(lengths.size):
            d = p[i + 1] - p[i]
            p[i + 1] = p[i] + lengths[i] * d / np.linalg.norm(d)
        err = float(np.linalg.norm(p[-1] - target))
        errors.append(err)
        it += 1
    return p, it, errors


def chain_reach(skeleton, end_joint):
    total, j = 0.0, end_joint
    while j > 0:
        total += skeleton.bone_lengths[j - 1]
        j = skeleton.parent_index[j]
    return total


def fabrik_solve(targets, skeleton, initial, max_iters=20, tol=None):
    """Multi-chain FABRIK over the skeleton tree for one frame.

    ``targets`` maps end-effector joint index to a 3D target. Sub-bases
    shared by several targeted chains take the mean of the positions
    proposed by each child during the forward pass. Joints in subtrees
    without targets follow rigidly along their current directions. Returns
    ``(positions, iterations)``.
    """
    p = np.array(initial, dtype=np.float64)
    n_j = skeleton.joint_count
    if p.shape != (n_j, 3):
        raise ShapeMismatch(f"initial pose must be ({n_j}, 3)")
    targets = {int(k): np.asarray(v, dtype=np.float64) for k, v in targets.items()}
    if tol is None:
        tol = 1e-4 * max((chain_reach(skeleton, e) for e in targets), default=1.0)
    parents = skeleton.parent_index
    lengths = (0.0,) + skeleton.bone_lengths  # indexed by child joint
    active = np.zeros(n_j, dtype=bool)
    for e in targets:
        j = e
        while j >= 0:
            active[j] = True
            j = parents[j]
    children = [[] for _ in range(n_j)]
    for j in range(1, n_j):
        children[parents[j]].append(j)
    root = p[0].copy()

    def error(q):
        return max((np.linalg.norm(q[e] - t) for e, t in targets.items()), default=0.0)

    it = 0
    while error(p) > tol and it < max_iters:
        fwd = p.copy()
        for j in range(n_j - 1, 0, -1):
            if not active[j]:
                continue
            if j in targets:
                fwd[j] = targets[j]
            else:
                proposals = []
                for c in children[j]:
                    if active[c]:
                        d = fwd[j] - fwd[c]
                        proposals.append(fwd[c] + lengths[c] * d / np.linalg.norm(d))
                fwd[j] = np.mean(proposals, axis=0)
        out = p.copy()
        out[0] = root
        for j in range(1, n_j):
            src = fwd[j] if active[j] else p[j]
            ref = fwd[parents[j]] if active[parents[j]] else p[parents[j]]
            d = src - ref if active[j] else p[j] - p[parents[j]]
            out[j] = out[parents[j]] + lengths[j] * d / np.linalg.norm(d)
        p = out
        it += 1
    return p, it


def retarget_positions(positions, source_skeleton, rig_skeleton, end_effectors=None, max_iters=20, tol=None):
    """Fit a rig with its own bone lengths to observed joint positions, frame by frame.

    The rig starts from the observed bone directions and FABRIK then pulls
    its end effectors onto the observed end-effector positions.
    """
    pos = np.asarray(positions, dtype=np.float64)
    if end_effectors is None:
        has_child = set(source_skeleton.parent_index[1:])
        end_effectors = [j for j in range(source_skeleton.joint_count) if j not in has_child]
    units = pos[:, 1:] - pos[:, list(source_skeleton.parent_index[1:])]
    start = units_to_pose(units, rig_skeleton)
    out = np.empty_like(start)
    for t in range(pos.shape[0]):
        targets = {e: pos[t, e] for e in end_effectors}
        out[t], _ = fabrik_solve(targets, rig_skeleton, start[t], max_iters, tol)
    return out


# rotations --------------------------------------------------------------------

def positions_to_rotations(positions, skeleton):
    """Local joint rotations ``(T, J, 4)`` reproducing ``positions`` under :func:`forward_kinematics`."""
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim != 3 or pos.shape[1:] != (skeleton.joint_count, 3):
        raise ShapeMismatch(f"positions must be (T, {skeleton.joint_count}, 3)")
    rest = skeleton.rest_directions
    if rest is None:
        raise ValueError("skeleton needs rest directions")
    n_t = pos.shape[0]
    glob = np.zeros((n_t, skeleton.bone_count, 4))
    local = np.zeros((n_t, skeleton.joint_count, 4))
    local[:, 0, 0] = 1.0
    for b in range(skeleton.bone_count):
        d = pos[:, b + 1] - pos[:, skeleton.bone_source(b)]
        glob[:, b] = shortest_arc(np.broadcast_to(rest[b], d.shape), d)
        pb = skeleton.bone_parent(b)
        if pb < 0:
            local[:, b + 1] = glob[:, b]
        else:
            local[:, b + 1] = quat_canonical(quat_mul(quat_conj(glob[:, pb]), glob[:, b]))
    return local


def forward_kinematics(rotations, skeleton):
    rot = np.asarray(rotations, dtype=np.float64)
    if rot.ndim != 3 or rot.shape[1:] != (skeleton.joint_count, 4):
        raise ShapeMismatch(f"rotations must be (T, {skeleton.joint_count}, 4)")
    rest = skeleton.rest_directions
    n_t = rot.shape[0]
    pos = np.zeros((n_t, skeleton.joint_count, 3))
    glob = np.zeros((n_t, skeleton.bone_count, 4))
    for b, length in enumerate(skeleton.bone_lengths):
        pb = skeleton.bone_parent(b)
        q = rot[:, b + 1]
        glob[:, b] = q if pb < 0 else quat_mul(glob[:, pb], q)
        pos[:, b + 1] = pos[:, skeleton.bone_source(b)] + length * quat_rotate(glob[:, b], rest[b])
    return pos


# lips -------------------------------------------------------------------------

def _check_indices(lip_indices, corner_indices):
    lips = list(lip_indices)
    corners = list(corner_indices)
    if len(set(lips)) != len(lips) or len(set(corners)) != len(corners):
        raise IndexOverlap("lip or corner index list contains duplicates")
    shared = set(lips) & set(corners)
    if shared:
        raise IndexOverlap(f"landmarks {sorted(shared)} are both lip and corner landmarks")
    if not corners:
        raise IndexOverlap("no lip corner landmarks")
    return lips, corners


def corner_weights(reference, lip_indices, corner_indices):
    """Inverse-square-distance weights ``(L_lip, C)`` from lip landmarks to corners, rows sum to 1."""
    ref = np.asarray(reference, dtype=np.float64)
    d = np.linalg.norm(ref[list(lip_indices)][:, None] - ref[list(corner_indices)][None], axis=-1)
    w = 1.0 / np.maximum(d, 1e-9) ** 2
    return w / w.sum(axis=1, keepdims=True)


def superpose_lips(face_syn, lips_phoneme, reference, layout):
    """Phoneme-predicted lip shape plus the generator's lip-corner expression.

    ``face_syn`` and ``lips_phoneme`` are positions. Each phoneme-driven lip
    landmark receives a distance-weighted blend of the corner landmarks'
    offsets from the neutral ``reference`` face. Corners and all other
    landmarks are passed through from ``face_syn`` untouched.
    """
    face = np.asarray(face_syn, dtype=np.float64)
    lips_p = np.asarray(lips_phoneme, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    lips, corners = _check_indices(layout.lip_indices, layout.lip_corner_indices)
    if lips_p.shape != (face.shape[0], len(lips), 3):
        raise ShapeMismatch(f"phoneme lips {lips_p.shape} vs expected {(face.shape[0], len(lips), 3)}")
    offsets = face[:, corners] - ref[corners]  # (T, C, 3)
    w = corner_weights(ref, lips, corners)
    out = face.copy()
    out[:, lips] = lips_p + np.einsum("lc,tcd->tld", w, offsets)
    return out


# export -------------------------------------------------------------------------

def export_animation(path, rotations, face, skeleton, frame_rate=15.0, windows=None):
    rot = np.asarray(rotations, dtype=np.float32)
    lm = np.ascontiguousarray(np.asarray(face, dtype="<f4"))
    if rot.shape[0] != lm.shape[0]:
        raise ShapeMismatch("rotations and landmarks must share the frame count")
    if rot.ndim != 3 or rot.shape[2] != 4 or lm.ndim != 3:
        raise ShapeMismatch("expected (T, J, 4) rotations and (T, L, 3) landmarks")
    doc = {
        "format": ANIMATION_FORMAT,
        "version": ANIMATION_VERSION,
        "frame_rate": float(frame_rate),
        "frame_count": int(rot.shape[0]),
        "skeleton": skeleton.to_dict(),
        "rotations": rot.astype(np.float64).tolist(),
        "landmarks": {
            "dtype": "float32",
            "shape": list(lm.shape),
            "encoding": "base64",
            "data": base64.b64encode(lm.tobytes()).decode("ascii"),
        },
    }
    if windows is not None:
        doc["windows"] = {"size": int(windows[0]), "offsets": [int(o) for o in windows[1]]}
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return doc


def load_animation(path, validate=True):
    with open(path) as fh:
        doc = json.load(fh)
    if validate:
        import jsonschema

        jsonschema.validate(doc, ANIMATION_SCHEMA)
    lm = doc["landmarks"]
    shape = tuple(lm["shape"])
    data = np.frombuffer(base64.b64decode(lm["data"]), dtype="<f4").reshape(shape)
    n_j = len(doc["skeleton"]["parent_index"])
    rot = np.asarray(doc["rotations"], dtype=np.float32).reshape(doc["frame_count"], n_j, 4)
    return {**doc, "rotations": rot, "landmarks": data.astype(np.float32)}


def write_landmark_map(path, layout):
    """Sidecar table from landmark index to a mesh control-point name."""
    names = {}
    for comp, members in layout.components:
        for k, idx in enumerate(members):
            names[str(idx)] = f"{comp}_{k:02d}"
    with open(path, "w") as fh:
        json.dump({"landmarks": names}, fh, indent=2, sort_keys=True)
        fh.write("\n")
