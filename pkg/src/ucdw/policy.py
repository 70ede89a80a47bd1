"""Neural dual policy: an MLP with residual skips mapping demand features to duals.

The network is trained to maximize the expected Lagrangian bound.  A sampled
bound uses a single pricing problem scaled by the fleet size, which makes each
gradient step cost one pricing solve.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .colgen import compute_lower_bound
from .pricing import DualPoint, solve_pricing
from .uc_model import UcInstance, fleet_fingerprint

CHECKPOINT_MAGIC = b"UCDW"
CHECKPOINT_VERSION = 1
FEATURE_SPEC = b"demand+reserve/capacity"
DESK_HIDDEN = (128, 128, 128, 128)
WIDE_HIDDEN = (1000, 1000, 1000, 1000)


class FleetMismatchError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


def featurize(instance: UcInstance, policy: "MlpPolicy | None" = None) -> np.ndarray:
    """Demand and reserve divided by total fleet capacity."""
    if policy is not None and policy.fingerprint != fleet_fingerprint(instance.generators):
        raise FleetMismatchError("instance fleet differs from the policy's fleet")
    cap = instance.capacity
    return np.concatenate([instance.demand, instance.reserve]) / cap


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class MlpPolicy:
    """h1 = tanh(W0 x + b0); h_{i+1} = tanh(W_i h_i + b_i) + R_i h_i; y = scale * softplus(W_out h + b_out)."""

    widths: tuple
    weights: list
    biases: list
    residuals: list  # one square matrix per hidden-to-hidden layer
    scale: float
    fingerprint: int
    n_T: int

    @classmethod
    def init(cls, fleet, n_T: int, hidden=DESK_HIDDEN, seed: int = 0) -> "MlpPolicy":
        d = 2 * n_T
        if len(set(hidden)) != 1:
            raise ValueError("residual connections need equal hidden widths")
        widths = (d, *hidden, d)
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            lim = math.sqrt(6.0 / (n_in + n_out))
            weights.append(rng.uniform(-lim, lim, (n_out, n_in)))
            biases.append(np.zeros(n_out))
        residuals = [np.zeros((w, w)) for w in hidden[1:]]
        scale = max(g.marginal_cost for g in fleet)
        return cls(widths, weights, biases, residuals, float(scale), fleet_fingerprint(fleet), n_T)

    # parameters in a fixed order: W0, b0, W1, b1, R1, ..., W_out, b_out
    def params(self) -> list:
        out = []
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            out += [W, b]
            if 1 <= i < len(self.weights) - 1:
                out.append(self.residuals[i - 1])
        return out

    def set_params(self, flat: list) -> None:
        it = iter(flat)
        for i in range(len(self.weights)):
            self.weights[i] = next(it)
            self.biases[i] = next(it)
            if 1 <= i < len(self.weights) - 1:
                self.residuals[i - 1] = next(it)

    def copy(self) -> "MlpPolicy":
        return MlpPolicy(self.widths, [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         [r.copy() for r in self.residuals], self.scale, self.fingerprint, self.n_T)

    def _forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.widths[0],):
            raise ValueError(f"expected {self.widths[0]} features, got {x.shape}")
        hs = [x]
        h = x
        last = len(self.weights) - 1
        for i in range(last):
            a = np.tanh(self.weights[i] @ h + self.biases[i])
            h = a + self.residuals[i - 1] @ h if i >= 1 else a
            hs.append(h)
        z = self.weights[last] @ h + self.biases[last]
        return hs, z

    def forward(self, features) -> DualPoint:
        _, z = self._forward(features)
        return DualPoint.from_vector(self.scale * _softplus(z))

    def predict(self, instance: UcInstance) -> DualPoint:
        return self.forward(featurize(instance, self))

    def backward(self, features, grad_y) -> list:
        """Gradient of <grad_y, y(features)> with respect to params(), same order."""
        hs, z = self._forward(features)
        g = np.asarray(grad_y, dtype=float) * self.scale * _sigmoid(z)
        last = len(self.weights) - 1
        grads = {}
        grads[("W", last)] = np.outer(g, hs[last])
        grads[("b", last)] = g
        gh = self.weights[last].T @ g
        for i in range(last - 1, -1, -1):
            h_in = hs[i]
            pre = self.weights[i] @ h_in + self.biases[i]
            ga = gh * (1.0 - np.tanh(pre) ** 2)
            grads[("W", i)] = np.outer(ga, h_in)
            grads[("b", i)] = ga
            g_in = self.weights[i].T @ ga
            if i >= 1:
                grads[("R", i)] = np.outer(gh, h_in)
                g_in = g_in + self.residuals[i - 1].T @ gh
            gh = g_in
        out = []
        for i in range(last + 1):
            out += [grads[("W", i)], grads[("b", i)]]
            if 1 <= i < last:
                out.append(grads[("R", i)])
        return out


def sampled_bound_gradient(instance: UcInstance, y: DualPoint, t: int):
    """Value and y-gradient of a^T y + |S| r_t(y)."""
    n_G = instance.n_G
    if not 0 <= t < n_G:
        raise IndexError("generator index out of range")
    res = solve_pricing(instance.generators[t], y, instance.n_T)
    value = float(instance.demand @ y.y_load + instance.reserve @ y.y_reserve + n_G * res.reduced_objective)
    grad = np.concatenate([instance.demand - n_G * res.load, instance.reserve - n_G * res.reserve])
    return value, grad


def sample_gradient(policy: MlpPolicy, instance: UcInstance, t: int):
    """Ascent gradient of the sampled bound with respect to the policy parameters.

    Returns (grads, value) where grads follows ``policy.params()`` order.
    """
    x = featurize(instance, policy)
    y = policy.forward(x)
    value, gy = sampled_bound_gradient(instance, y, t)
    return policy.backward(x, gy), value


@dataclass
class AdamState:
    m: list
    v: list
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params, lr=1e-4):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], lr)

    def ascend(self, params, grads) -> list:
        self.step += 1
        c1 = 1.0 - self.beta1 ** self.step
        c2 = 1.0 - self.beta2 ** self.step
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            out.append(p + self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


@dataclass
class TrainConfig:
    steps: int = 2000
    eval_every: int = 100
    plateau_patience: int = 3
    lr: float = 1e-4
    lr_decay_divisor: float = 1.5
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.steps <= 0 or self.eval_every <= 0 or self.plateau_patience <= 0:
            raise ValueError("budgets must be positive")
        if self.lr <= 0 or self.lr_decay_divisor <= 1:
            raise ValueError("bad learning-rate settings")
        if self.workers != 1:
            raise ValueError("only single-worker training is supported")


@dataclass
class TrainResult:
    policy: MlpPolicy
    curve: list = field(default_factory=list)  # (step, metric, lr)
    best_metric: float = -math.inf
    best_step: int = 0


def evaluate_policy(policy: MlpPolicy, instances, references=None) -> float:
    """Mean bound over instances, divided by per-instance references when given."""
    vals = []
    for i, inst in enumerate(instances):
        lb = compute_lower_bound(inst, policy.predict(inst))
        vals.append(lb / references[i] if references is not None else lb)
    return float(np.mean(vals))


def train(policy: MlpPolicy, train_instances, eval_instances, config: TrainConfig | None = None,
          references=None, callback=None) -> TrainResult:
    """Stochastic ascent on the sampled bound; returns the best evaluated checkpoint."""
    config = config or TrainConfig()
    if not train_instances or not eval_instances:
        raise ValueError("need training and evaluation instances")
    rng = np.random.default_rng(config.seed)
    policy = policy.copy()
    adam = AdamState.for_params(policy.params(), config.lr)
    best = policy.copy()
    best_metric = evaluate_policy(policy, eval_instances, references)
    result = TrainResult(best, [(0, best_metric, adam.lr)], best_metric, 0)
    stale = 0
    feats = [featurize(inst, policy) for inst in train_instances]
    for step in range(1, config.steps + 1):
        k = int(rng.integers(len(train_instances)))
        t = int(rng.integers(train_instances[k].n_G))
        y = policy.forward(feats[k])
        _, gy = sampled_bound_gradient(train_instances[k], y, t)
        policy.set_params(adam.ascend(policy.params(), policy.backward(feats[k], gy)))
        if step % config.eval_every == 0 or step == config.steps:
            metric = evaluate_policy(policy, eval_instances, references)
            result.curve.append((step, metric, adam.lr))
            if callback is not None:
                callback(step, metric, adam.lr)
            if metric > result.best_metric:
                result.best_metric, result.best_step = metric, step
                result.policy = policy.copy()
                stale = 0
            else:
                stale += 1
                if stale >= config.plateau_patience:
                    adam.lr /= config.lr_decay_divisor
                    stale = 0
    return result


# --- checkpoints --------------------------------------------------------------


def checkpoint_bytes(policy: MlpPolicy) -> bytes:
    head = CHECKPOINT_MAGIC + struct.pack("<IQ", CHECKPOINT_VERSION, policy.fingerprint)
    head += struct.pack("<I", len(FEATURE_SPEC)) + FEATURE_SPEC
    head += struct.pack("<II", policy.n_T, len(policy.widths)) + struct.pack(f"<{len(policy.widths)}I", *policy.widths)
    head += struct.pack("<d", policy.scale)
    blob = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in policy.params())
    body = head + blob
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(policy: MlpPolicy, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(policy))


def load_checkpoint(path, fleet=None) -> MlpPolicy:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a policy checkpoint")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch")
    pos = 4
    version, fp = struct.unpack_from("<IQ", body, pos)
    pos += 12
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n_spec,) = struct.unpack_from("<I", body, pos)
    pos += 4
    spec = body[pos : pos + n_spec]
    pos += n_spec
    if spec != FEATURE_SPEC:
        raise CheckpointError(f"unknown feature spec {spec!r}")
    n_T, n_w = struct.unpack_from("<II", body, pos)
    pos += 8
    widths = struct.unpack_from(f"<{n_w}I", body, pos)
    pos += 4 * n_w
    (scale,) = struct.unpack_from("<d", body, pos)
    pos += 8
    if fleet is not None and fleet_fingerprint(fleet) != fp:
        raise FleetMismatchError("checkpoint was trained on a different fleet")
    shapes = []
    for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        shapes += [(n_out, n_in), (n_out,)]
        if 1 <= i < n_w - 2:
            shapes.append((n_out, n_out))
    params = []
    for shp in shapes:
        n = int(np.prod(shp))
        if pos + 8 * n > len(body):
            raise CheckpointError("truncated checkpoint")
        params.append(np.frombuffer(body, dtype="<f8", count=n, offset=pos).reshape(shp).astype(float))
        pos += 8 * n
    if pos != len(body):
        raise CheckpointError("trailing bytes in checkpoint")
    n_layers = n_w - 1
    pol = MlpPolicy(tuple(widths), [None] * n_layers, [None] * n_layers, [None] * (n_layers - 2), scale, fp, n_T)
    pol.set_params(params)
    return pol
