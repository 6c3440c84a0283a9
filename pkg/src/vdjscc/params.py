"""Named trainable arrays and the checkpoint archive format.

A checkpoint is a zip of ``.npy`` members, one per named array, plus a
``__config__`` member holding the INI text of the config that produced it.
Member timestamps are fixed so identical contents give identical bytes.
"""

from __future__ import annotations

import io
import zipfile
from pathlib import Path

import numpy as np

from .autodiff import Tensor

CHECKPOINT_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


class CheckpointError(OSError):
    pass


class ParamStore(dict):
    """Ordered ``name -> Tensor`` map with seeded initializers."""

    def __init__(self, seed: int = 0):
        super().__init__()
        self.rng = np.random.default_rng(seed)

    def _add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(data, requires_grad=True)
        self[name] = t
        return t

    def normal(self, name: str, shape, std: float = 0.02) -> Tensor:
        return self._add(name, self.rng.normal(0.0, std, size=shape))

    def zeros(self, name: str, shape) -> Tensor:
        return self._add(name, np.zeros(shape))

    def ones(self, name: str, shape) -> Tensor:
        return self._add(name, np.ones(shape))

    def linear(self, name: str, n_in: int, n_out: int) -> None:
        self.normal(f"{name}.weight", (n_in, n_out))
        self.zeros(f"{name}.bias", (n_out,))

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.items()}

    def count(self) -> int:
        return sum(v.data.size for v in self.values())


def save_archive(path, arrays: dict[str, np.ndarray], config_text: str = "") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        meta = zipfile.ZipInfo("__config__", date_time=_ZIP_DATE)
        zf.writestr(meta, f"# checkpoint-version {CHECKPOINT_VERSION}\n{config_text}")
        for name in arrays:
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_DATE), buf.getvalue())
    tmp.replace(path)


def load_archive(path) -> tuple[dict[str, np.ndarray], str]:
    arrays = {}
    with zipfile.ZipFile(path) as zf:
        config_text = zf.read("__config__").decode()
        for info in zf.infolist():
            if info.filename.endswith(".npy"):
                with zf.open(info) as fh:
                    arrays[info.filename[:-4]] = np.lib.format.read_array(io.BytesIO(fh.read()), allow_pickle=False)
    return arrays, config_text


def assign(params: ParamStore, arrays: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into ``params``, verifying every name and shape."""
    problems = []
    for name, t in params.items():
        if name not in arrays:
            problems.append(f"missing {name}")
        elif arrays[name].shape != t.shape:
            problems.append(f"{name}: checkpoint {arrays[name].shape} vs model {t.shape}")
    if problems:
        raise CheckpointError("incompatible checkpoint: " + "; ".join(problems))
    for name, t in params.items():
        t.data = np.array(arrays[name], dtype=np.float64)
