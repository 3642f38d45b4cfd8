"""Byte-reproducible array archives (zip of ``.npy`` members plus ``meta.json``).

``numpy.savez`` stamps members with the current time, which breaks
byte-identical reruns, so archives are written member by member with a
fixed timestamp.
"""

import io
import json
import zipfile

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)


def _info(name):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_archive(path, arrays, meta=None):
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_info("meta.json"), json.dumps(meta or {}, sort_keys=True, indent=1))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.save(buf, np.asarray(arrays[name]), allow_pickle=False)
            zf.writestr(_info(f"arrays/{name}.npy"), buf.getvalue())


def load_archive(path):
    arrays = {}
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        for name in zf.namelist():
            if name.startswith("arrays/") and name.endswith(".npy"):
                key = name[len("arrays/") : -len(".npy")]
                arrays[key] = np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
    return arrays, meta


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def flatten_state(obj, arrays, prefix="s"):
    """Split a nested state (dicts, lists, tensors, scalars) into JSON plus arrays.

    Tensors and arrays are moved into ``arrays`` under generated keys and
    replaced by ``{"__tensor__": key}`` / ``{"__array__": key}`` markers.
    Dict keys may be ints or strings and are kept as ``[key, value]`` pairs.
    """
    import torch

    if isinstance(obj, torch.Tensor):
        arrays[prefix] = obj.detach().cpu().numpy()
        return {"__tensor__": prefix}
    if isinstance(obj, np.ndarray):
        arrays[prefix] = obj
        return {"__array__": prefix}
    if isinstance(obj, dict):
        return {"__dict__": [[k, flatten_state(v, arrays, f"{prefix}.{k}")] for k, v in obj.items()]}
    if isinstance(obj, (list, tuple)):
        return [flatten_state(v, arrays, f"{prefix}.{i}") for i, v in enumerate(obj)]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def unflatten_state(obj, arrays):
    import torch

    if isinstance(obj, dict):
        if "__tensor__" in obj:
            return torch.from_numpy(np.array(arrays[obj["__tensor__"]]))
        if "__array__" in obj:
            return np.array(arrays[obj["__array__"]])
        if "__dict__" in obj:
            return {k: unflatten_state(v, arrays) for k, v in obj["__dict__"]}
        return {k: unflatten_state(v, arrays) for k, v in obj.items()}
    if isinstance(obj, list):
        return [unflatten_state(v, arrays) for v in obj]
    return obj
