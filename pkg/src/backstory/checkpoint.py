"""Binary checkpoint formats.

Language model (magic ``PBSTLM1\\0``)::

    8 bytes  magic
    5 x u32  little-endian: d_model, n_layers, n_heads, vocab_size, t_max
    floats   every parameter tensor as little-endian float32, row-major, in
             ``LMParams.named_arrays`` order

Entailment scorer (magic ``PBSTCLS1``)::

    8 bytes  magic
    1 x u32  d_model
    16 bytes ascii fingerprint of the language model it was trained against
    floats   M (d x d), a (d), b (d), bias (1) as little-endian float32

Vocabularies are plain UTF-8 text, one token per line.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ValidationError
from .model import LMParams, ModelDims, init_lm

LM_MAGIC = b"PBSTLM1\0"
CLS_MAGIC = b"PBSTCLS1"


def save_lm(path, params: LMParams) -> None:
    dims = params.dims
    with open(path, "wb") as fh:
        fh.write(LM_MAGIC)
        fh.write(struct.pack("<5I", dims.d_model, dims.n_layers, dims.n_heads,
                             dims.vocab_size, dims.t_max))
        for _, arr in params.named_arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_lm(path) -> LMParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != LM_MAGIC:
        raise ValidationError(f"not a model checkpoint (bad magic): {path}")
    try:
        d, n_layers, n_heads, vocab, t_max = struct.unpack_from("<5I", blob, 8)
        dims = ModelDims(d_model=d, n_layers=n_layers, n_heads=n_heads,
                         t_max=t_max, vocab_size=vocab)
    except (struct.error, ValidationError) as exc:
        raise ValidationError(f"corrupt checkpoint header: {exc}") from exc
    params = init_lm(dims, seed=0)
    offset = 8 + 20
    for _, arr in params.named_arrays():
        n = arr.size
        end = offset + 4 * n
        if end > len(blob):
            raise ValidationError(f"truncated checkpoint: {path}")
        flat = np.frombuffer(blob, dtype="<f4", count=n, offset=offset)
        arr[...] = flat.astype(np.float64).reshape(arr.shape)
        offset = end
    if offset != len(blob):
        raise ValidationError(f"trailing bytes in checkpoint: {path}")
    return params


def save_classifier(path, cls, lm_fingerprint: str) -> None:
    if len(lm_fingerprint) != 16:
        raise ValidationError("fingerprint must be 16 hex characters")
    with open(path, "wb") as fh:
        fh.write(CLS_MAGIC)
        fh.write(struct.pack("<I", cls.m.shape[0]))
        fh.write(lm_fingerprint.encode("ascii"))
        for arr in (cls.m, cls.a, cls.b, np.array([cls.bias])):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_classifier(path) -> tuple["ClassifierParams", str]:
    from .consistency import ClassifierParams

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CLS_MAGIC:
        raise ValidationError(f"not a classifier checkpoint (bad magic): {path}")
    (d,) = struct.unpack_from("<I", blob, 8)
    fingerprint = blob[12:28].decode("ascii")
    want = d * d + d + d + 1
    flat = np.frombuffer(blob, dtype="<f4", offset=28)
    if flat.size != want:
        raise ValidationError(f"corrupt classifier checkpoint: {path}")
    flat = flat.astype(np.float64)
    m = flat[: d * d].reshape(d, d)
    a = flat[d * d: d * d + d]
    b = flat[d * d + d: d * d + 2 * d]
    bias = float(flat[-1])
    return ClassifierParams(m=m, a=a, b=b, bias=bias), fingerprint
