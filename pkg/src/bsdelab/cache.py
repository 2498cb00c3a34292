"""Binary ensemble cache.

Layout, little-endian throughout::

    offset  type        field
    0       4 bytes     magic b"BSDE"
    4       u32         format version (1)
    8       u64         N, number of paths
    16      u64         J, number of steps
    24      u64         seed
    32      u8          model tag: 0 natural, 1 enlarged-brownian, 2 initial-enlargement
    33      u32         length L of the model-parameter text
    37      L bytes     model parameters as UTF-8 JSON {"xi_dist": ..., "xi_params": [...]}
    37+L    f64[J+1]    grid knots
    ...     f64[N*J]    dw, row-major (path-major, knot-minor)
    ...     f64[N*J]    dw' (enlarged-brownian only)
    ...     f64[N]      xi (initial-enlargement only)

The round trip is bit-exact.
"""

import json
import struct

import numpy as np

from .core import MODEL_TAGS, FiltrationModel, PathEnsemble, TimeGrid
from .errors import CacheFormatError, ConfigurationError

MAGIC = b"BSDE"
VERSION = 1
_HEADER = struct.Struct("<4sIQQQB")
_LEN = struct.Struct("<I")
_F8 = np.dtype("<f8")
_KIND = {tag: kind for kind, tag in MODEL_TAGS.items()}


def cache_save(ens, path):
    """Write ``ens`` to ``path``."""
    params = json.dumps({"xi_dist": ens.model.xi_dist, "xi_params": list(ens.model.xi_params)},
                        sort_keys=True).encode("utf-8")
    blocks = [ens.grid.knots, ens.dw]
    if ens.dwp is not None:
        blocks.append(ens.dwp)
    if ens.xi is not None:
        blocks.append(ens.xi)
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, ens.N, ens.J, ens.seed, ens.model.tag))
            fh.write(_LEN.pack(len(params)))
            fh.write(params)
            for b in blocks:
                fh.write(np.ascontiguousarray(b, dtype=_F8).tobytes())
    except OSError as exc:
        raise OSError(f"cannot write ensemble cache {path}: {exc.strerror}") from exc


def _take(buf, pos, count, what):
    nbytes = count * 8
    if pos + nbytes > len(buf):
        raise CacheFormatError(f"truncated cache: {what} needs {nbytes} bytes at offset {pos}")
    return np.frombuffer(buf, dtype=_F8, count=count, offset=pos).astype(np.float64), pos + nbytes


def cache_load(path):
    """Read an ensemble written by :func:`cache_save`."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise CacheFormatError(f"{path}: not an ensemble cache (bad magic bytes)")
    if len(buf) < _HEADER.size + _LEN.size:
        raise CacheFormatError(f"{path}: truncated header")
    _, version, N, J, seed, tag = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise CacheFormatError(
            f"{path}: cache format version {version} is incompatible with this reader (version {VERSION})")
    if tag not in _KIND:
        raise CacheFormatError(f"{path}: unknown model tag {tag}")
    (plen,) = _LEN.unpack_from(buf, _HEADER.size)
    pos = _HEADER.size + _LEN.size
    if pos + plen > len(buf):
        raise CacheFormatError(f"{path}: truncated model parameters")
    try:
        params = json.loads(buf[pos:pos + plen].decode("utf-8"))
        model = FiltrationModel(_KIND[tag], params["xi_dist"], tuple(params["xi_params"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise CacheFormatError(f"{path}: malformed model parameters ({exc})") from exc
    pos += plen
    knots, pos = _take(buf, pos, J + 1, "grid knots")
    dw, pos = _take(buf, pos, N * J, "dw")
    dwp = xi = None
    if model.has_auxiliary:
        dwp, pos = _take(buf, pos, N * J, "dw'")
        dwp = dwp.reshape(N, J)
    if model.has_xi:
        xi, pos = _take(buf, pos, N, "xi")
    if pos != len(buf):
        raise CacheFormatError(f"{path}: {len(buf) - pos} unexpected trailing bytes")
    try:
        return PathEnsemble(TimeGrid(knots), model, seed, dw.reshape(N, J), dwp, xi)
    except ConfigurationError as exc:
        raise CacheFormatError(f"{path}: invalid contents ({exc})") from exc
