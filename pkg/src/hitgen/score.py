"""Time-homogeneous score network and its denoising-score-matching training.

The score s(x) is an unstructured MLP (no equivariance assumptions) with a
hand-rolled layer-wise backward pass and Adam updates; networks here are tiny
and a fixed reduction order keeps training bit-reproducible under a seed.

Training data are forward trajectories started at the data points.  Only the
segment after the last exit from the epsilon-enlarged support is retained,
and each retained step contributes the squared deviation of the score from
the Green-kernel log-gradient pointing back to the path's own start:

    loss = (1/n_paths) * sum_paths sum_{k > last_exit} dt
           * || s(x_k) - grad_x log G_r(x_k, start) ||^2 .

Minibatches sample retained (path, step) pairs uniformly, i.e. with
probability proportional to dt within each retained segment, which makes the
batch estimator unbiased for the time integral.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .htransform import Bridge, ConstantH, HSpec, LearnedBackward, SphereHit
from .kernels import grad_log_green
from .sde import KillRule, Path, simulate_batch

ACTIVATIONS = ("tanh", "softplus")


@dataclass(frozen=True, eq=False)
class ScoreParams:
    """Feed-forward score network: flat weight vector plus architecture."""

    layer_dims: tuple
    activation: str
    weights: np.ndarray

    def __post_init__(self):
        dims = tuple(int(v) for v in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2 or dims[0] != dims[-1]:
            raise ValueError("score network must map R^d to R^d")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (n_weights(dims),):
            raise ValueError(f"weight vector must have length {n_weights(dims)}")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.layer_dims[0]

    def views(self):
        """Per-layer (W, b) views into the flat weight vector."""
        out = []
        off = 0
        for a, b in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            w = self.weights[off:off + a * b].reshape(a, b)
            off += a * b
            bias = self.weights[off:off + b]
            off += b
            out.append((w, bias))
        return out


def n_weights(layer_dims) -> int:
    return sum(a * b + b for a, b in zip(layer_dims[:-1], layer_dims[1:]))


def init_params(layer_dims, activation="tanh", seed=0) -> ScoreParams:
    """N(0, 1/fan_in) weights, zero biases, zero final layer (driftless start)."""
    rng = np.random.default_rng(seed)
    flat = np.zeros(n_weights(layer_dims))
    off = 0
    n_layers = len(layer_dims) - 1
    for li, (a, b) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
        if li < n_layers - 1:
            flat[off:off + a * b] = rng.normal(0.0, 1.0 / math.sqrt(a), a * b)
        off += a * b + b
    return ScoreParams(tuple(layer_dims), activation, flat)


def _forward(params: ScoreParams, x: np.ndarray, keep_cache=False):
    a = x
    pre = []
    post = [x]
    views = params.views()
    for li, (w, b) in enumerate(views):
        z = a @ w + b
        if li < len(views) - 1:
            a = np.tanh(z) if params.activation == "tanh" else np.logaddexp(z, 0.0)
        else:
            a = z
        if keep_cache:
            pre.append(z)
            post.append(a)
    return (a, pre, post) if keep_cache else a


def score_eval(params: ScoreParams, x):
    """Evaluate the score network at x ((d,) or (N, d))."""
    if not np.isfinite(params.weights).all():
        raise PreconditionError("score network has non-finite weights")
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 1
    out = _forward(params, np.atleast_2d(x))
    return out[0] if scalar else out


def loss_and_grad(params: ScoreParams, x: np.ndarray, targets: np.ndarray):
    """Mean squared deviation over the batch and its flat weight gradient."""
    out, pre, post = _forward(params, x, keep_cache=True)
    resid = out - targets
    batch = x.shape[0]
    loss = float((resid * resid).sum() / batch)
    views = params.views()
    grad = np.zeros_like(params.weights)
    delta = 2.0 * resid / batch
    off = len(params.weights)
    for li in range(len(views) - 1, -1, -1):
        w, b = views[li]
        a_prev = post[li]
        gw = a_prev.T @ delta
        gb = delta.sum(axis=0)
        off -= w.size + b.size
        grad[off:off + w.size] = gw.ravel()
        grad[off + w.size:off + w.size + b.size] = gb
        if li > 0:
            delta = delta @ w.T
            if params.activation == "tanh":
                delta = delta * (1.0 - post[li] * post[li])
            else:
                delta = delta / (1.0 + np.exp(-pre[li - 1]))
    return loss, grad


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    grad_clip_norm: float = 100.0
    seed: int = 0
    # forward-corpus settings
    paths_per_point: int = 32
    dt: float = 1e-3
    step_cap: int = 1_000_000
    steps_per_epoch: int = 100
    bridge_kill_eps: float = 1e-2
    hidden: tuple = (64, 64)
    activation: str = "tanh"

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.steps_per_epoch) < 0:
            raise ValueError("epochs, batch_size, steps_per_epoch must be >= 0")
        if self.learning_rate <= 0 or self.adam_eps <= 0 or self.dt <= 0:
            raise ValueError("learning_rate, adam_eps, dt must be > 0")
        b1, b2 = self.adam_betas
        if not (0 < b1 < 1 and 0 < b2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")


def forward_kill_rule(forward: HSpec, config: TrainConfig) -> KillRule:
    if isinstance(forward, ConstantH):
        return KillRule.exponential(forward.kernel.rate, step_cap=config.step_cap)
    if isinstance(forward, Bridge):
        return KillRule.hit_ball(forward.x1, config.bridge_kill_eps,
                                 step_cap=config.step_cap)
    if isinstance(forward, SphereHit):
        return KillRule.exit_sphere(forward.radius, step_cap=config.step_cap)
    raise PreconditionError("training corpus needs a forward transform variant")


def simulate_corpus(data, forward: HSpec, config: TrainConfig, support,
                    threads: int = 1) -> list[tuple[Path, np.ndarray]]:
    """Forward paths from each data point, with last-exit indices attached."""
    starts = np.repeat(data.points, config.paths_per_point, axis=0)
    rule = forward_kill_rule(forward, config)
    paths = simulate_batch(forward, starts, rule, config.dt, config.seed,
                           record=True, threads=threads)
    return [(p.with_last_exit(support), starts[i]) for i, p in enumerate(paths)]


def retained_pairs(corpus, kernel):
    """All (state, target) pairs after the last exit, targets from the exact kernel."""
    xs, starts, path_ids = [], [], []
    for pid, (path, y) in enumerate(corpus):
        if path.last_exit_index is None:
            raise PreconditionError("corpus path is missing its last-exit index")
        lo = path.last_exit_index + 1
        if lo > path.kill_index:
            continue
        seg = path.states[lo:path.kill_index + 1]
        xs.append(seg)
        starts.append(np.repeat(y[None, :], seg.shape[0], axis=0))
        path_ids.append(np.full(seg.shape[0], pid))
    if not xs:
        raise PreconditionError("no retained steps; epsilon too large for this corpus")
    x = np.concatenate(xs, axis=0)
    y = np.concatenate(starts, axis=0)
    targets = grad_log_green(kernel, x, y)
    return x, targets, np.concatenate(path_ids)


def dsm_loss(params: ScoreParams, corpus, kernel, support) -> float:
    """Exact corpus loss: (1/n_paths) sum_i sum_{k>last_exit} dt ||s - g||^2."""
    total = 0.0
    n_paths = len(corpus)
    for path, y in corpus:
        if path.last_exit_index is None:
            raise PreconditionError("path is missing its last-exit index")
        lo = path.last_exit_index + 1
        if lo > path.kill_index:
            continue
        seg = path.states[lo:path.kill_index + 1]
        g = grad_log_green(kernel, seg, y)
        s = _forward(params, seg)
        total += path.dt * float(((s - g) ** 2).sum())
    return total / n_paths


@dataclass
class TrainResult:
    params: ScoreParams
    epoch_losses: list = field(default_factory=list)
    n_pairs: int = 0
    n_paths: int = 0
    metrics: dict = field(default_factory=dict)


def train(data, forward: HSpec, support, config: TrainConfig,
          threads: int = 1, corpus=None) -> TrainResult:
    """Fit the score by Adam on the denoising objective; returns params + history."""
    kernel = forward.kernel
    if corpus is None:
        corpus = simulate_corpus(data, forward, config, support, threads=threads)
    x_all, g_all, _ = retained_pairs(corpus, kernel)
    n_pairs = x_all.shape[0]
    n_paths = len(corpus)
    dims = (kernel.dim, *config.hidden, kernel.dim)
    params = init_params(dims, config.activation, seed=config.seed)

    # spec loss = (n_pairs * dt / n_paths) * mean over pairs
    loss_scale = n_pairs * config.dt / n_paths
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0x5C0)))
    m = np.zeros_like(params.weights)
    v = np.zeros_like(params.weights)
    b1, b2 = config.adam_betas
    weights = params.weights.copy()
    epoch_losses = []
    t = 0
    for _ in range(config.epochs):
        for _ in range(config.steps_per_epoch):
            t += 1
            idx = rng.integers(0, n_pairs, size=min(config.batch_size, n_pairs))
            cur = ScoreParams(dims, config.activation, weights)
            loss, grad = loss_and_grad(cur, x_all[idx], g_all[idx])
            if not math.isfinite(loss):
                raise PreconditionError(
                    f"training diverged at step {t}: loss={loss}, "
                    f"|w|={np.abs(weights).max():.3g}")
            gn = float(np.sqrt((grad * grad).sum()))
            if gn > config.grad_clip_norm:
                grad *= config.grad_clip_norm / gn
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad * grad
            mhat = m / (1 - b1 ** t)
            vhat = v / (1 - b2 ** t)
            weights = weights - config.learning_rate * mhat / (np.sqrt(vhat) + config.adam_eps)
        cur = ScoreParams(dims, config.activation, weights)
        resid = _forward(cur, x_all) - g_all
        epoch_losses.append(loss_scale * float((resid * resid).sum() / n_pairs))

    final = ScoreParams(dims, config.activation, weights)
    return TrainResult(params=final, epoch_losses=epoch_losses,
                       n_pairs=n_pairs, n_paths=n_paths,
                       metrics={"loss_scale": loss_scale})


def learned_backward(params: ScoreParams, forward: HSpec) -> LearnedBackward:
    return LearnedBackward(kernel=forward.kernel, score=params, forward=forward)
