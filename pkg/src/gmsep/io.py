"""On-disk formats: binary tensor files, 8-bit PGM frames, flat config files.

TensorFile layout (all little-endian)::

    b"GMS1" | dtype tag (1 byte, 0 = float64) | order d (1 byte, 2 or 3)
    | d x uint64 dims | prod(dims) float64 values in column-major order

Every writer goes through :func:`atomic_write`, so an interrupted run leaves
either the previous file or nothing, never a truncated one.
"""
from __future__ import annotations

import csv
import io
import json
import os
import re
import struct
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidParameterError, ShapeError
from .filters import BlockCirculantFilter, BlockFilter, CirculantFilter, DenseFilter, SeparableFilter

MAGIC = b"GMS1"
DTYPE_F64 = 0


def atomic_write(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write(path, text.encode("utf-8"))


# -- tensor files ---------------------------------------------------------------

def encode_tensor(X) -> bytes:
    X = np.asarray(X, dtype=float)
    if X.ndim not in (2, 3):
        raise ShapeError(f"tensor files hold order 2 or 3 arrays, got order {X.ndim}")
    head = MAGIC + struct.pack("<BB", DTYPE_F64, X.ndim) + struct.pack(f"<{X.ndim}Q", *X.shape)
    return head + X.astype("<f8").tobytes(order="F")


def decode_tensor(buf: bytes, source="<bytes>") -> np.ndarray:
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise FormatError(f"{source}: bad magic (expected {MAGIC!r}, found {bytes(buf[:4])!r})")
    tag, d = struct.unpack_from("<BB", buf, 4)
    if tag != DTYPE_F64:
        raise FormatError(f"{source}: unsupported element type tag {tag}")
    if d not in (2, 3):
        raise FormatError(f"{source}: unsupported order {d}")
    head = 6 + 8 * d
    if len(buf) < head:
        raise FormatError(f"{source}: truncated header")
    dims = struct.unpack_from(f"<{d}Q", buf, 6)
    expected = head + 8 * int(np.prod(dims, dtype=object))
    if len(buf) != expected:
        raise FormatError(f"{source}: payload has {len(buf) - head} bytes, dims {dims} need {expected - head}")
    data = np.frombuffer(buf, dtype="<f8", offset=head)
    return data.reshape(dims, order="F").astype(float)


def write_tensor(path, X):
    atomic_write(path, encode_tensor(X))


def read_tensor(path) -> np.ndarray:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc
    return decode_tensor(buf, str(path))


# -- PGM frames -----------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def read_pgm(path) -> np.ndarray:
    """Binary (P5) 8-bit PGM as a float array scaled to ``[0, 1]``."""
    buf = Path(path).read_bytes()
    pos, tokens = 0, []
    for _ in range(4):
        m = _PGM_TOKEN.match(buf, pos)
        if m is None:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if not 0 < maxval < 256:
        raise FormatError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    pos += 1  # single whitespace byte before the raster
    raster = buf[pos:pos + w * h]
    if len(raster) != w * h:
        raise FormatError(f"{path}: raster has {len(raster)} bytes, expected {w * h}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w) / 255.0


def write_pgm(path, img):
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ShapeError("a PGM frame must be a matrix")
    px = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    h, w = px.shape
    atomic_write(path, f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes())


def read_frames(frames_dir) -> np.ndarray:
    """Stack the ``*.pgm`` files of a directory (sorted by name) into an ``h x w x K`` tensor."""
    files = sorted(Path(frames_dir).glob("*.pgm"))
    if not files:
        raise FormatError(f"no .pgm frames found in {frames_dir}")
    frames = [read_pgm(f) for f in files]
    shape = frames[0].shape
    for f, fr in zip(files, frames):
        if fr.shape != shape:
            raise ShapeError(f"frame {f.name} has size {fr.shape}, expected {shape}")
    return np.stack(frames, axis=2)


def write_frames(outdir, T, prefix):
    for k in range(T.shape[2]):
        write_pgm(Path(outdir) / f"{prefix}_{k:04d}.pgm", T[:, :, k])


# -- flat key = value configuration ---------------------------------------------

@dataclass
class RunConfig:
    """Flat run configuration; every field has a documented default.

    ``lambda`` (stored as ``lam``) defaults to ``1/sqrt(min(m, n))`` when unset.
    """

    lam: float | None = None
    rho_outer: float = 1.0
    rho_inner: float = 1.0
    max_outer: int = 500
    max_inner: int = 30
    tol_outer: float = 1e-7
    tol_inner: float = 1e-5
    warm_start_inner: bool = False
    rank_rtol: float = 1e-12
    seed: int = 0
    filter: str = "gaussian"
    m: int = 100
    n: int = 100
    p: int | None = None
    rank_ratio: float = 0.05
    sparsity_ratio: float = 0.05
    sparse_model: str = "gaussian"
    rank_ratios: tuple = (0.02, 0.1, 0.5)
    sparsity_ratios: tuple = (0.02, 0.1, 0.5)
    trials: int = 10
    eps: float = 1e-3
    workers: int = 1
    blur: str = "paper"

    def solver_kwargs(self):
        return dict(lam=self.lam, rho_outer=self.rho_outer, rho_inner=self.rho_inner,
                    max_outer=self.max_outer, max_inner=self.max_inner, tol_outer=self.tol_outer,
                    tol_inner=self.tol_inner, warm_start_inner=self.warm_start_inner,
                    rank_rtol=self.rank_rtol)


_KEY_ALIASES = {"lambda": "lam"}


def _convert(raw: str, default, name):
    raw = raw.strip()
    try:
        if name == "lam":
            return None if raw.lower() in ("", "auto", "none") else float(raw)
        if name == "p":
            return None if raw.lower() in ("", "auto", "none") else int(raw)
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError as exc:
        raise InvalidParameterError(f"config key {name!r}: cannot parse {raw!r}") from exc


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    cfg = base or RunConfig()
    known = {f.name for f in fields(RunConfig)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameterError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        name = _KEY_ALIASES.get(key, key)
        if name not in known:
            raise InvalidParameterError(f"config line {lineno}: unknown key {key!r}")
        setattr(cfg, name, _convert(value, getattr(RunConfig(), name), name))
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)


# -- filter descriptors -----------------------------------------------------------

def filter_to_json(H) -> dict:
    """JSON-ready description of a filter.  Dense matrices are stored by reference."""
    if isinstance(H, BlockFilter):
        kind = "block_circulant" if isinstance(H, BlockCirculantFilter) else "block"
        return {"kind": kind, "E1": H.E1.tolist(), "E2": H.E2.tolist(), "k1": H.k1, "k2": H.k2}
    if isinstance(H, SeparableFilter):
        return {"kind": "separable", "G1": H.G1.tolist(), "G2": H.G2.tolist()}
    if isinstance(H, CirculantFilter):
        return {"kind": "circulant", "first_col": H.first_col.tolist()}
    if isinstance(H, DenseFilter):
        return {"kind": "dense", "file": "H.gms"}
    raise InvalidParameterError(f"cannot describe filter {H!r}")


def filter_from_json(desc: dict, base_dir=".") -> object:
    kind = desc.get("kind")
    try:
        if kind == "dense":
            return DenseFilter(read_tensor(Path(base_dir) / desc["file"]))
        if kind == "circulant":
            return CirculantFilter(desc["first_col"])
        if kind == "separable":
            return SeparableFilter(desc["G1"], desc["G2"])
        if kind in ("block", "block_circulant"):
            cls = BlockCirculantFilter if kind == "block_circulant" else BlockFilter
            return cls(desc["E1"], desc["E2"], desc["k1"], desc["k2"])
    except KeyError as exc:
        raise FormatError(f"filter descriptor of kind {kind!r} lacks field {exc}") from exc
    raise FormatError(f"unknown filter kind {kind!r}")


def load_filter(path):
    """A ``.json`` descriptor or a ``.gms`` tensor file holding a dense ``H``."""
    path = Path(path)
    if path.suffix == ".json":
        try:
            desc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read filter descriptor {path}: {exc}") from exc
        return filter_from_json(desc, path.parent)
    return DenseFilter(read_tensor(path))


def fmt17(x):
    """Render a float with 17 significant digits (round-trip exact)."""
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt17(r[c]) for c in columns])
    atomic_write_text(path, buf.getvalue())
