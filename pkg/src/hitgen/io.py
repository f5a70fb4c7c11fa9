"""Binary checkpoint format, sample CSVs, and metrics files.

Checkpoint layout (little-endian):
  magic 'HGCK' | u32 version | u32 dim | u32 n_layer_dims | u8 activation
  | u8 forward tag | u8 process kind | u8 pad | f64 rate | f64 ou_theta
  | f64 epsilon | f64 sphere radius | u32 layer_dims[...]
  | f64 bridge target x1[dim] | f64 weights[...]

A JSON sidecar (same path + '.json') carries the training metrics.  Nothing
written here contains timestamps; outputs are byte-stable under a fixed seed.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .htransform import Bridge, ConstantH, HSpec, LearnedBackward, SphereHit
from .kernels import BROWNIAN, GreenKernel, ORNSTEIN_UHLENBECK, ProcessSpec
from .score import ScoreParams, n_weights

_MAGIC = b"HGCK"
_VERSION = 1
_ACTIVATIONS = ("tanh", "softplus")
_FORWARD_TAGS = {ConstantH: 0, Bridge: 1, SphereHit: 2}
_PROCESS_TAGS = {BROWNIAN: 0, ORNSTEIN_UHLENBECK: 1}


def save_checkpoint(file, params: ScoreParams, forward: HSpec, epsilon: float,
                    metrics: dict | None = None):
    file = Path(file)
    kernel = forward.kernel
    proc = kernel.process
    if type(forward) not in _FORWARD_TAGS:
        raise CheckpointError(f"cannot checkpoint forward variant {type(forward).__name__}")
    radius = forward.radius if isinstance(forward, SphereHit) else 0.0
    x1 = forward.x1 if isinstance(forward, Bridge) else np.zeros(proc.dim)
    with open(file, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, proc.dim, len(params.layer_dims)))
        fh.write(struct.pack("<BBBB", _ACTIVATIONS.index(params.activation),
                             _FORWARD_TAGS[type(forward)],
                             _PROCESS_TAGS[proc.kind], 0))
        fh.write(struct.pack("<dddd", proc.rate, proc.ou_theta, epsilon, radius))
        fh.write(np.asarray(params.layer_dims, dtype="<u4").tobytes())
        fh.write(np.asarray(x1, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.weights, dtype="<f8").tobytes())
    sidecar = file.with_name(file.name + ".json")
    sidecar.write_text(json.dumps(metrics or {}, indent=2, sort_keys=True) + "\n")


def load_checkpoint(file):
    """Returns (LearnedBackward spec, epsilon, sidecar metrics dict)."""
    file = Path(file)
    raw = file.read_bytes()
    if raw[:4] != _MAGIC:
        raise CheckpointError(f"{file}: not a checkpoint file")
    version, dim, n_dims = struct.unpack_from("<III", raw, 4)
    if version != _VERSION:
        raise CheckpointError(f"{file}: unsupported checkpoint version {version}")
    act_tag, fwd_tag, proc_tag, _ = struct.unpack_from("<BBBB", raw, 16)
    rate, ou_theta, epsilon, radius = struct.unpack_from("<dddd", raw, 20)
    off = 52
    layer_dims = tuple(int(v) for v in np.frombuffer(raw, "<u4", n_dims, off))
    off += 4 * n_dims
    x1 = np.frombuffer(raw, "<f8", dim, off).copy()
    off += 8 * dim
    nw = n_weights(layer_dims)
    weights = np.frombuffer(raw, "<f8", nw, off).copy()
    if layer_dims[0] != dim:
        raise CheckpointError(f"{file}: layer dims do not match dimension {dim}")

    if proc_tag == _PROCESS_TAGS[BROWNIAN]:
        kernel = GreenKernel(ProcessSpec(BROWNIAN, dim, rate))
    else:
        kernel = GreenKernel(ProcessSpec(ORNSTEIN_UHLENBECK, dim, rate, ou_theta),
                             mode="quadrature")
    if fwd_tag == 0:
        forward = ConstantH(kernel)
    elif fwd_tag == 1:
        forward = Bridge(kernel, x1)
    elif fwd_tag == 2:
        forward = SphereHit(kernel, radius)
    else:
        raise CheckpointError(f"{file}: unknown forward tag {fwd_tag}")
    params = ScoreParams(layer_dims, _ACTIVATIONS[act_tag], weights)
    sidecar = file.with_name(file.name + ".json")
    metrics = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return LearnedBackward(kernel=kernel, score=params, forward=forward), epsilon, metrics


def save_samples_csv(file, batch):
    """One row per successful sample: coordinates, lifetime, steps, init."""
    file = Path(file)
    d = batch.samples.shape[1] if batch.samples.size else batch.inits.shape[1]
    header = (",".join(f"x{i}" for i in range(d))
              + ",lifetime,steps,"
              + ",".join(f"init_x{i}" for i in range(d)))
    lines = [header]
    for s, lt, st, init in zip(batch.samples, batch.lifetimes, batch.steps, batch.inits):
        lines.append(",".join(f"{v:.17g}" for v in s)
                     + f",{lt:.17g},{int(st)},"
                     + ",".join(f"{v:.17g}" for v in init))
    file.write_text("\n".join(lines) + "\n")


def write_metrics(file, events):
    """Metrics as JSON lines, one object per event."""
    file = Path(file)
    with open(file, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
