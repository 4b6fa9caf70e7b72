"""Structure-aware test-time adaptation.

A small adapter maps the spectral fingerprint of the test graph to a prompt
vector that is prepended to the frozen policy's state encoding. Only the
adapter is tuned, by REINFORCE on auxiliary queries, against
``w_L * N + w_KL * sum_t KL(pi_psi || pi_orig)``.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .env import EnvConfig, run_episode
from .graph import Graph
from .memory import ContractError
from .policy import ActionSpace, LinearPolicy, PolicyParams, ValueParams, masked_softmax
from .spectral import Fingerprint, fingerprint
from .tasks import generate_aux_queries

log = logging.getLogger(__name__)


class AdaptationDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SttaConfig:
    w_L: float = 1.0
    w_KL: float = 0.1
    K: int = 5
    R: int = 3
    lr: float = 0.01
    seed: int = 0
    steps: int = 20
    M: int = 16
    hidden: int = 32
    prompt_len: int = 4
    prompt_width: int = 8
    templates: tuple | None = None

    def __post_init__(self):
        if self.K < 1 or self.R < 1:
            raise ValueError("K and R must be >= 1")
        if self.w_L < 0 or self.w_KL < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")

    @property
    def prompt_dim(self) -> int:
        return self.prompt_len * self.prompt_width


@dataclass
class AdapterParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    L_p: int
    d_p: int

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ContractError(f"adapter {name} has non-finite entries")
            setattr(self, name, arr)
        h = self.W1.shape[1]
        if self.b1.shape != (h,) or self.W2.shape != (h, self.L_p * self.d_p) or \
                self.b2.shape != (self.L_p * self.d_p,):
            raise ContractError("adapter shapes are inconsistent")

    @classmethod
    def zeros(cls, M: int = 16, hidden: int = 32, L_p: int = 4, d_p: int = 8) -> "AdapterParams":
        return cls(np.zeros((M + 1, hidden)), np.zeros(hidden), np.zeros((hidden, L_p * d_p)),
                   np.zeros(L_p * d_p), L_p, d_p)

    @classmethod
    def init(cls, M: int = 16, hidden: int = 32, L_p: int = 4, d_p: int = 8, seed: int = 0,
             scale: float = 1.0) -> "AdapterParams":
        """Random first layer, zero output layer: the initial prompt is zero
        (so the adapted policy starts equal to the original) while every
        weight still receives gradient."""
        rng = np.random.default_rng(seed)
        W1 = rng.normal(0.0, scale / np.sqrt(M + 1), (M + 1, hidden))
        b1 = rng.normal(0.0, 0.1 * scale, hidden)
        return cls(W1, b1, np.zeros((hidden, L_p * d_p)), np.zeros(L_p * d_p), L_p, d_p)

    @property
    def M(self) -> int:
        return self.W1.shape[0] - 1

    @property
    def prompt_dim(self) -> int:
        return self.L_p * self.d_p

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def from_flat(self, v: np.ndarray) -> "AdapterParams":
        v = np.asarray(v, dtype=np.float64)
        shapes = [self.W1.shape, self.b1.shape, self.W2.shape, self.b2.shape]
        parts, i = [], 0
        for shp in shapes:
            size = int(np.prod(shp))
            parts.append(v[i:i + size].reshape(shp))
            i += size
        if i != v.size:
            raise ContractError("flat vector has the wrong length")
        return AdapterParams(*parts, self.L_p, self.d_p)

    def copy(self) -> "AdapterParams":
        return self.from_flat(self.flat().copy())


def _zvec(z) -> np.ndarray:
    return np.asarray(z.values if isinstance(z, Fingerprint) else z, dtype=np.float64)


def adapter_forward(psi: AdapterParams, z) -> np.ndarray:
    """``tanh(z W1 + b1) W2 + b2`` as a flat vector of length ``L_p * d_p``."""
    zv = _zvec(z)
    if zv.shape != (psi.W1.shape[0],):
        raise ContractError(f"fingerprint length {zv.shape} does not match adapter input {psi.W1.shape[0]}")
    h = np.tanh(zv @ psi.W1 + psi.b1)
    out = h @ psi.W2 + psi.b2
    return out.reshape(psi.L_p, psi.d_p).ravel()


def adapter_vjp(psi: AdapterParams, z, g_out: np.ndarray) -> np.ndarray:
    """Flat ``d <g_out, prompt> / d psi``."""
    zv = _zvec(z)
    h = np.tanh(zv @ psi.W1 + psi.b1)
    g_out = np.asarray(g_out, dtype=np.float64).ravel()
    dpre = (psi.W2 @ g_out) * (1.0 - h * h)
    return np.concatenate([np.outer(zv, dpre).ravel(), dpre, np.outer(h, g_out).ravel(), g_out])


def adapter_jacobian(psi: AdapterParams, z) -> np.ndarray:
    """Dense ``d prompt / d psi`` (rows: prompt entries)."""
    P = psi.prompt_dim
    return np.array([adapter_vjp(psi, z, np.eye(P)[i]) for i in range(P)])


def kl_divergence(p, q) -> float:
    """``sum p log(p / q)`` in nats."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ContractError("distributions have different support sizes")
    pos = p > 0
    if np.any(q[pos] <= 0):
        raise ContractError("q must be positive wherever p is positive")
    return float(max(np.sum(p[pos] * np.log(p[pos] / q[pos])), 0.0))


def stta_loss(trajs, cfg: SttaConfig) -> float:
    """Mean over ``(trajectory, per-step KL list)`` of ``w_L N + w_KL sum KL``."""
    if not trajs:
        return 0.0
    total = 0.0
    for traj, kls in trajs:
        if len(kls) != traj.N:
            raise ContractError("need one KL value per step")
        total += cfg.w_L * traj.N + cfg.w_KL * float(np.sum(kls))
    return total / len(trajs)


# -- per-step terms -----------------------------------------------------------------------------

def step_terms(theta_p: np.ndarray, temperature: float, x: np.ndarray, x_orig: np.ndarray, theta: np.ndarray,
               mask, action: int) -> tuple[np.ndarray, float, np.ndarray]:
    """For one decision: ``d log pi(a) / d prompt``, the KL to the original
    policy, and ``d KL / d prompt``."""
    p = masked_softmax(x @ theta / temperature, mask)
    q = masked_softmax(x_orig @ theta / temperature, mask)
    g_logp = -p
    g_logp[action] += 1.0
    d_logp = theta_p @ g_logp / temperature
    pos = p > 0
    log_ratio = np.zeros_like(p)
    log_ratio[pos] = np.log(p[pos] / q[pos])
    kl = float(np.sum(p[pos] * log_ratio[pos]))
    d_kl = theta_p @ (p * (log_ratio - kl)) / temperature
    return d_logp, max(kl, 0.0), d_kl


@dataclass
class EpisodeTerms:
    N: int
    kls: list
    score: np.ndarray       # sum_t d log pi(a_t) / d prompt
    kl_grad: np.ndarray     # sum_t d KL_t / d prompt


def episode_terms(policy: PolicyParams, prompt: np.ndarray, infos) -> EpisodeTerms:
    P = policy.prompt_dim
    theta_p = policy.theta[:P]
    score = np.zeros(P)
    kl_grad = np.zeros(P)
    kls = []
    for info in infos:
        x = info["x"]
        x_orig = np.concatenate([np.zeros(P), x[P:]])
        d_logp, kl, d_kl = step_terms(theta_p, policy.temperature, x, x_orig, policy.theta, info["mask"],
                                      info["action"])
        score += d_logp
        kl_grad += d_kl
        kls.append(kl)
    return EpisodeTerms(len(infos), kls, score, kl_grad)


def loss_gradient(terms: list[EpisodeTerms], cfg: SttaConfig) -> tuple[float, np.ndarray]:
    """Mean loss and its gradient with respect to the prompt.

    Score-function term with a leave-one-out mean baseline, plus the direct
    derivative of the KL terms (which depend on the prompt through
    ``pi_psi`` itself, not only through the visited states).
    """
    losses = np.array([cfg.w_L * t.N + cfg.w_KL * float(np.sum(t.kls)) for t in terms])
    B = len(terms)
    base = (losses.sum() - losses) / (B - 1) if B > 1 else np.zeros(B)
    grad = np.zeros_like(terms[0].score)
    for t, loss, b in zip(terms, losses, base):
        grad += (loss - b) * t.score + cfg.w_KL * t.kl_grad
    return float(losses.mean()), grad / B


# -- adaptation loop ------------------------------------------------------------------------------

def params_hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


@dataclass
class AdaptRow:
    step: int
    loss: float
    mean_n: float
    mean_kl: float
    lr: float

    def as_tuple(self):
        return (self.step, self.loss, self.mean_n, self.mean_kl, self.lr)


@dataclass
class AdaptResult:
    adapter: AdapterParams
    curve: list = field(default_factory=list)
    fingerprint: Fingerprint | None = None
    queries: list = field(default_factory=list)
    policy_hash: str = ""


def rollouts(policy: PolicyParams, prompt, g: Graph, queries, R: int, seed: int, space: ActionSpace,
             env_cfg: EnvConfig, scorer=None):
    agent = LinearPolicy(policy, space, prompt)
    rng = np.random.default_rng(seed)
    out = []
    for q in queries:
        for _ in range(R):
            out.append(run_episode(agent, g, q, env_cfg, int(rng.integers(2**63)), scorer))
    return out


def adapt(psi0: AdapterParams, g_test: Graph, policy: PolicyParams, cfg: SttaConfig = SttaConfig(),
          value: ValueParams | None = None, space: ActionSpace | None = None,
          env_cfg: EnvConfig = EnvConfig(), scorer=None, queries=None, fp: Fingerprint | None = None,
          on_step=None) -> AdaptResult:
    """Tune ``psi`` on ``K`` auxiliary queries of ``g_test`` for ``cfg.steps``
    steps of REINFORCE; ``policy`` (and ``value``) stay untouched."""
    space = space or ActionSpace.default()
    if policy.prompt_dim != psi0.prompt_dim:
        raise ContractError(f"policy expects a prompt of {policy.prompt_dim}, adapter emits {psi0.prompt_dim}")
    fp = fp or fingerprint(g_test, psi0.M, seed=cfg.seed)
    if queries is None:
        queries = generate_aux_queries(g_test, cfg.K, cfg.seed, cfg.templates)
    if not queries:
        raise ContractError("no auxiliary query is satisfiable on this graph")
    frozen = (policy.theta, [policy.temperature]) + ((value.omega, [value.bias]) if value else ())
    before = params_hash(*frozen)
    psi = psi0.copy()
    lr = cfg.lr
    halved = False
    result = AdaptResult(psi, [], fp, list(queries), before)
    rng = np.random.default_rng(cfg.seed)
    step_idx = 0
    while step_idx < cfg.steps:
        prompt = adapter_forward(psi, fp)
        trajs = rollouts(policy, prompt, g_test, queries, cfg.R, int(rng.integers(2**63)), space, env_cfg,
                         scorer)
        terms = [episode_terms(policy, prompt, t.extras) for t in trajs]
        loss, g_prompt = loss_gradient(terms, cfg)
        grad = adapter_vjp(psi, fp, g_prompt)
        new_flat = psi.flat() - lr * grad
        if not (np.isfinite(loss) and np.all(np.isfinite(new_flat))):
            if halved:
                raise AdaptationDiverged(f"adaptation diverged twice (step {step_idx})")
            log.warning("adaptation step %d diverged; reverting and halving lr", step_idx)
            lr *= 0.5
            halved = True
            continue
        psi = psi.from_flat(new_flat)
        row = AdaptRow(step_idx, loss, float(np.mean([t.N for t in terms])),
                       float(np.mean([np.mean(t.kls) for t in terms])), lr)
        result.curve.append(row)
        if on_step is not None:
            on_step(row, psi)
        step_idx += 1
    if params_hash(*frozen) != before:
        raise ContractError("base policy parameters changed during adaptation")
    result.adapter = psi
    return result


def mean_chain_length(policy: PolicyParams, prompt, g: Graph, queries, R: int, seed: int,
                      space: ActionSpace | None = None, env_cfg: EnvConfig = EnvConfig(), scorer=None) -> float:
    trajs = rollouts(policy, prompt, g, queries, R, seed, space or ActionSpace.default(), env_cfg, scorer)
    return float(np.mean([t.N for t in trajs]))
