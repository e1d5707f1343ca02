"""Problem instances: source law, jamming channel, distortion matrix.

Instance files are JSON with the fields ``alphabets``, ``p_x``, ``w`` and
``d``. ``w`` is indexed ``[x][j][y][z]`` and ``d`` is indexed ``[x][x_hat]``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .probability import Alphabet, CondDist, Dist

AXES = ("X", "J", "Y", "Z", "Xh")
ROW_TOL = 1e-9
# Rows already this close to 1 are left untouched so that load/save is idempotent.
_RENORM_SLACK = 1e-14


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    p_x: np.ndarray
    w: np.ndarray
    d: np.ndarray
    name: str = ""
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        for attr in ("p_x", "w", "d"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        validate_arrays(self.p_x, self.w, self.d)

    @property
    def sizes(self) -> dict[str, int]:
        nx, nj, ny, nz = self.w.shape
        return {"X": nx, "J": nj, "Y": ny, "Z": nz, "Xh": self.d.shape[1]}

    nx = property(lambda self: self.w.shape[0])
    nj = property(lambda self: self.w.shape[1])
    ny = property(lambda self: self.w.shape[2])
    nz = property(lambda self: self.w.shape[3])
    nxh = property(lambda self: self.d.shape[1])

    @property
    def d_max(self) -> float:
        return float(self.d.max())

    def alphabet(self, axis: str) -> Alphabet:
        labels = self.labels.get(axis)
        return Alphabet(axis, self.sizes[axis], tuple(labels) if labels else None)

    def source(self) -> Dist:
        return Dist(self.alphabet("X"), self.p_x)

    def channel(self) -> CondDist:
        a = self.alphabet
        return CondDist((a("X"), a("J")), (a("Y"), a("Z")), self.w)

    def jammer(self, q) -> CondDist:
        return CondDist((self.alphabet("X"),), (self.alphabet("J"),), np.asarray(q, dtype=float))

    @property
    def w_y(self) -> np.ndarray:
        return self.w.sum(axis=3)

    @property
    def w_z(self) -> np.ndarray:
        return self.w.sum(axis=2)

    def to_dict(self) -> dict:
        alphabets = {}
        for axis, size in self.sizes.items():
            labels = self.labels.get(axis)
            alphabets[axis] = {"size": size, "labels": list(labels)} if labels else size
        return {
            "name": self.name,
            "alphabets": alphabets,
            "p_x": self.p_x.tolist(),
            "w": self.w.tolist(),
            "d": self.d.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @property
    def digest(self) -> str:
        payload = json.dumps(
            {"p_x": self.p_x.tolist(), "w": self.w.tolist(), "d": self.d.tolist()}, sort_keys=True
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return (
            self.name == other.name
            and self.labels == other.labels
            and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in ("p_x", "w", "d"))
        )

    __hash__ = None


def validate_arrays(p_x: np.ndarray, w: np.ndarray, d: np.ndarray) -> None:
    if p_x.ndim != 1:
        raise ValidationError(f"p_x must be 1-D, got shape {p_x.shape}")
    if w.ndim != 4 or w.shape[0] != p_x.shape[0]:
        raise ValidationError(f"w must be indexed [x][j][y][z] with |X|={p_x.shape[0]}, got shape {w.shape}")
    if d.ndim != 2 or d.shape[0] != p_x.shape[0]:
        raise ValidationError(f"d must be indexed [x][x_hat] with |X|={p_x.shape[0]}, got shape {d.shape}")
    if min(w.shape) < 1 or d.shape[1] < 1:
        raise ValidationError("every alphabet needs at least one symbol")
    if not np.all(np.isfinite(p_x)) or np.any(p_x <= 0):
        bad = int(np.argmin(p_x))
        raise ValidationError(f"p_x[{bad}] = {p_x[bad]!r}; every source symbol needs positive probability")
    if abs(p_x.sum() - 1.0) > ROW_TOL:
        raise ValidationError(f"p_x sums to {p_x.sum():.12g}, not 1")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValidationError("w entries must be finite and nonnegative")
    sums = w.sum(axis=(2, 3))
    for x, j in np.argwhere(np.abs(sums - 1.0) > ROW_TOL):
        raise ValidationError(f"w row [x={x}][j={j}] sums to {sums[x, j]:.12g}, not 1")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValidationError("d entries must be finite and nonnegative")


def _renormalize(arr: np.ndarray, axes) -> np.ndarray:
    sums = arr.sum(axis=axes, keepdims=True)
    off = np.abs(sums - 1.0) > _RENORM_SLACK
    return np.where(off, arr / sums, arr)


def _field(doc: dict, key: str, where: str):
    if key not in doc:
        raise ValidationError(f"{where}: missing field {key!r}")
    return doc[key]


def _array(doc: dict, key: str, ndim: int, where: str) -> np.ndarray:
    raw = _field(doc, key, where)
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: field {key!r} is not a rectangular numeric array ({exc})") from None
    if arr.ndim != ndim:
        raise ValidationError(f"{where}: field {key!r} must be a {ndim}-D array, got {arr.ndim}-D")
    return arr


def instance_from_dict(doc: dict, where: str = "<instance>") -> ProblemInstance:
    if not isinstance(doc, dict):
        raise ValidationError(f"{where}: top level must be an object")
    alphabets = _field(doc, "alphabets", where)
    sizes, labels = {}, {}
    for axis in AXES:
        entry = alphabets.get(axis) if isinstance(alphabets, dict) else None
        if entry is None:
            raise ValidationError(f"{where}: alphabets.{axis} missing")
        if isinstance(entry, dict):
            sizes[axis] = int(_field(entry, "size", f"{where}: alphabets.{axis}"))
            if entry.get("labels"):
                labels[axis] = [str(s) for s in entry["labels"]]
        else:
            sizes[axis] = int(entry)
    p_x = _array(doc, "p_x", 1, where)
    w = _array(doc, "w", 4, where)
    d = _array(doc, "d", 2, where)
    expect = {
        "p_x": (sizes["X"],),
        "w": (sizes["X"], sizes["J"], sizes["Y"], sizes["Z"]),
        "d": (sizes["X"], sizes["Xh"]),
    }
    for key, arr in (("p_x", p_x), ("w", w), ("d", d)):
        if arr.shape != expect[key]:
            raise ValidationError(f"{where}: field {key!r} has shape {arr.shape}, alphabets imply {expect[key]}")
    for axis, lab in labels.items():
        if len(lab) != sizes[axis]:
            raise ValidationError(f"{where}: alphabets.{axis} has {len(lab)} labels for size {sizes[axis]}")
    validate_arrays(p_x, w, d)
    return ProblemInstance(
        p_x=_renormalize(p_x, 0),
        w=_renormalize(w, (2, 3)),
        d=d,
        name=str(doc.get("name", "")),
        labels=labels,
    )


def load_instance(path) -> ProblemInstance:
    """Load an instance file, or a bundled instance by name (``bsc-jam`` etc.)."""
    path_s = str(path)
    if path_s in bundled_names():
        text = resources.files("avrs.instances").joinpath(f"{path_s}.json").read_text()
        where = f"bundled:{path_s}"
    else:
        where = path_s
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValidationError(f"{where}: cannot read ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{where}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return instance_from_dict(doc, where)


def save_instance(inst: ProblemInstance, path) -> None:
    Path(path).write_text(inst.to_json())


def bundled_names() -> list[str]:
    files = resources.files("avrs.instances")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def hamming(n: int) -> np.ndarray:
    return 1.0 - np.eye(n)


def bsc(p: float) -> np.ndarray:
    return np.array([[1 - p, p], [p, 1 - p]])


def random_instance(rng: np.random.Generator, nx=2, nj=2, ny=2, nz=2, nxh=None, name="") -> ProblemInstance:
    """Random instance with Dirichlet(1) laws; Hamming distortion when |X~| = |X|."""
    nxh = nx if nxh is None else nxh
    p_x = rng.dirichlet(np.ones(nx))
    p_x = np.maximum(p_x, 1e-3)
    p_x /= p_x.sum()
    w = rng.dirichlet(np.ones(ny * nz), size=(nx, nj)).reshape(nx, nj, ny, nz)
    d = hamming(nx) if nxh == nx else rng.random((nx, nxh))
    return ProblemInstance(p_x=p_x, w=w, d=d, name=name)
