"""Euler-Maruyama simulation of killed diffusions.

Discretisation: x_{k+1} = x_k + drift(x_k) dt + sqrt(dt) xi_k with standard
Gaussian xi_k.  Hitting is detected by state membership at grid points only
(an O(sqrt Q dt) overshoot bias, accounted for in downstream tolerances), and
exponential killing is realised by pre-drawing the lifetime and truncating at
ceil(zeta/dt) steps, which is exact when the drift is the base drift (h == 1).

Randomness contract (fixes bit-reproducibility and parallel decomposition):
path ``i`` under master seed ``s`` owns the Philox stream derived from
``SeedSequence(s).spawn(...)[i]`` and consumes, in order, one Exp draw when
the kill rule is rate-based, then standard normals in blocks of
``NOISE_BLOCK * dim`` regardless of where the path is killed.  A path's
trajectory therefore depends only on (spec, start, rule, dt, s, i) -- not on
batch size, thread count, or engine backend up to floating-point rounding of
the drift (identical bytes for a fixed backend).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path as FsPath

import numpy as np

from .backend import advance_block
from .errors import PreconditionError
from .tables import KILL_EXP, build_drift_program, build_kill_program

NOISE_BLOCK = 128

KILL_REASONS = {1: "hit", 2: "rate", 3: "cap"}
RATE_KILL = "rate"
HIT_KILL = "hit"
STEP_CAP_REACHED = "cap"


@dataclass(frozen=True)
class KillRule:
    """Termination rule: one of exp-rate / ball-hit / sphere-exit / support-hit."""

    kind: str
    rate: float = 0.0
    center: np.ndarray | None = None
    eps: float = 0.0
    radius: float = 0.0
    support: "object" = None
    step_cap: int = 1_000_000

    def __post_init__(self):
        if self.kind not in ("exp", "ball", "sphere", "support", "none"):
            raise ValueError(f"unknown kill rule kind {self.kind!r}")
        if self.step_cap < 1:
            raise ValueError("step_cap must be >= 1")
        if self.kind == "exp" and self.rate <= 0:
            raise ValueError("exp rule needs a positive rate")

    @classmethod
    def exponential(cls, rate, step_cap=1_000_000):
        return cls("exp", rate=rate, step_cap=step_cap)

    @classmethod
    def hit_ball(cls, center, eps, step_cap=1_000_000):
        return cls("ball", center=np.asarray(center, dtype=np.float64),
                   eps=float(eps), step_cap=step_cap)

    @classmethod
    def exit_sphere(cls, radius, step_cap=1_000_000):
        return cls("sphere", radius=float(radius), step_cap=step_cap)

    @classmethod
    def hit_support(cls, support, step_cap=1_000_000):
        return cls("support", support=support, step_cap=step_cap)

    @classmethod
    def none(cls, step_cap):
        return cls("none", step_cap=step_cap)


@dataclass(frozen=True)
class Path:
    """One killed trajectory with its kill bookkeeping.

    ``states`` holds kill_index + 1 rows when the path was recorded;
    ``endpoint`` is always present.  ``lifetime`` is kill_index * dt.
    """

    start: np.ndarray
    dt: float
    kill_reason: str
    kill_index: int
    endpoint: np.ndarray
    states: np.ndarray | None = None
    last_exit_index: int | None = None
    clipped_steps: int = 0

    @property
    def lifetime(self) -> float:
        return self.kill_index * self.dt

    def with_last_exit(self, support) -> "Path":
        return replace(self, last_exit_index=last_exit_index(self, support))


def path_generators(seed: int, n: int):
    """Independent per-path Philox streams under one master seed."""
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(child)) for child in ss.spawn(n)]


def simulate_batch(spec, starts, rule: KillRule, dt: float, seed: int,
                   record: bool = False, drift_max: float = 1e6,
                   threads: int = 1, drift_offset=None) -> list[Path]:
    """Simulate one path per start point; path i uses stream (seed, i)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    starts = np.atleast_2d(np.asarray(starts, dtype=np.float64))
    n, dim = starts.shape
    if dim != spec.kernel.dim:
        raise ValueError(f"start points must have dimension {spec.kernel.dim}")

    if threads > 1 and n > 1:
        chunks = np.array_split(np.arange(n), min(threads, n))
        gens = path_generators(seed, n)

        def run(idx):
            return _simulate_chunk(spec, starts[idx], rule, dt,
                                   [gens[i] for i in idx], record, drift_max,
                                   drift_offset)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
        return [p for part in parts for p in part]

    return _simulate_chunk(spec, starts, rule, dt, path_generators(seed, n),
                           record, drift_max, drift_offset)


def _simulate_chunk(spec, starts, rule, dt, gens, record, drift_max, drift_offset=None):
    n, dim = starts.shape
    dprog = build_drift_program(spec, drift_max, offset=drift_offset)
    kprog = build_kill_program(rule)

    n_exp = None
    if kprog.kind == KILL_EXP:
        zeta = np.array([g.exponential(1.0 / rule.rate) for g in gens])
        n_exp = np.maximum(np.ceil(zeta / dt).astype(np.int64), 1)

    states = starts.copy()
    status = np.zeros(n, dtype=np.int8)
    kill_steps = np.zeros(n, dtype=np.int64)
    clip_counts = np.zeros(n, dtype=np.int64)
    recorded: list[list[np.ndarray]] = [[] for _ in range(n)] if record else None

    active = np.arange(n)
    k0 = 0
    while active.size:
        noise = np.empty((active.size, NOISE_BLOCK, dim))
        for j, i in enumerate(active):
            noise[j] = gens[i].standard_normal((NOISE_BLOCK, dim))
        sub_states = np.ascontiguousarray(states[active])
        sub_exp = n_exp[active] if n_exp is not None else None
        st, ks, cc, rec = advance_block(sub_states, noise, dt, k0, sub_exp,
                                        rule.step_cap, dprog, kprog, record)
        states[active] = sub_states
        clip_counts[active] += cc
        if record:
            for j, i in enumerate(active):
                taken = (ks[j] - k0) if st[j] else NOISE_BLOCK
                if taken > 0:
                    recorded[i].append(rec[j, :taken].copy())
        done = st != 0
        status[active[done]] = st[done]
        kill_steps[active[done]] = ks[done]
        active = active[~done]
        k0 += NOISE_BLOCK

    paths = []
    for i in range(n):
        states_i = None
        if record:
            parts = [starts[i][None, :]] + recorded[i]
            states_i = np.concatenate(parts, axis=0)
        paths.append(Path(start=starts[i].copy(), dt=dt,
                          kill_reason=KILL_REASONS[int(status[i])],
                          kill_index=int(kill_steps[i]),
                          endpoint=states[i].copy(),
                          states=states_i,
                          clipped_steps=int(clip_counts[i])))
    return paths


def simulate(spec, start, rule: KillRule, dt: float, rng_seed: int,
             record: bool = True, drift_max: float = 1e6) -> Path:
    """Simulate a single killed trajectory (stream index 0 of the seed)."""
    return simulate_batch(spec, np.asarray(start)[None, :], rule, dt, rng_seed,
                          record=record, drift_max=drift_max)[0]


def last_exit_index(path: Path, support) -> int:
    """Largest k <= kill_index with states[k] inside the support estimate."""
    if path.states is None:
        raise PreconditionError("path was not recorded; re-simulate with record=True")
    member = support.contains(path.states)
    if not member.any():
        raise PreconditionError("no state of the path lies in the support estimate")
    return int(np.flatnonzero(member)[-1])


def dump_paths_csv(file, paths: list[Path]):
    """Trace dump: one row per step (path id, step index, coordinates)."""
    file = FsPath(file)
    dim = paths[0].start.shape[0] if paths else 0
    header = "path,step," + ",".join(f"x{i}" for i in range(dim))
    rows = []
    for pid, p in enumerate(paths):
        if p.states is None:
            raise PreconditionError("cannot dump a path simulated without record=True")
        for k, state in enumerate(p.states):
            rows.append(f"{pid},{k}," + ",".join(f"{v:.17g}" for v in state))
    file.write_text(header + "\n" + "\n".join(rows) + ("\n" if rows else ""))
