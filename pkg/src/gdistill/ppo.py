"""Generalized advantage estimation and PPO-clip for the linear-softmax
policy, with exact analytic gradients and plain gradient ascent."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .env import EnvConfig, run_episode
from .memory import ContractError
from .policy import ActionSpace, LinearPolicy, PolicyParams, ValueParams, masked_softmax

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    lr: float = 0.3
    value_lr: float = 0.05
    batch: int = 32
    epochs: int = 4
    kl_coeff: float = 0.3
    value_coeff: float = 0.5
    normalize_advantages: bool = True

    def __post_init__(self):
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma and lambda must lie in [0, 1]")
        if not (self.clip_eps > 0 and self.lr > 0 and self.value_lr >= 0):
            raise ValueError("clip_eps and lr must be positive")
        if self.batch < 1 or self.epochs < 1 or self.kl_coeff < 0:
            raise ValueError("batch, epochs >= 1 and kl_coeff >= 0 required")


def gae(rewards, values, gamma: float, lam: float) -> np.ndarray:
    """``A_t = sum_l (gamma*lam)^l delta_{t+l}``, ``delta_t = r_t + gamma V_{t+1} - V_t``.

    ``values`` has one more entry than ``rewards`` (the bootstrap value; 0
    after a terminal step).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if len(values) != len(rewards) + 1:
        raise ContractError("values must have len(rewards) + 1 entries")
    adv = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * values[t + 1] - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
    return adv


@dataclass
class Batch:
    """Per-step training records (stacked)."""

    x: np.ndarray            # policy inputs [prompt ; features]
    feats: np.ndarray        # value-function inputs
    mask: np.ndarray
    actions: np.ndarray
    old_logp: np.ndarray
    old_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)


def _probs(theta, temperature, x, mask) -> np.ndarray:
    z = (x @ theta) / temperature
    z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def ppo_surrogate(batch: Batch, p: PolicyParams, clip_eps: float) -> float:
    """Mean of ``min(r A, clip(r, 1-eps, 1+eps) A)``."""
    probs = _probs(p.theta, p.temperature, batch.x, batch.mask)
    r = probs[np.arange(len(batch)), batch.actions] / np.exp(batch.old_logp)
    a = batch.advantages
    return float(np.mean(np.minimum(r * a, np.clip(r, 1 - clip_eps, 1 + clip_eps) * a)))


def _kl_rows(p_new, p_old, mask) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(mask & (p_new > 0), np.log(p_new) - np.log(np.where(p_old > 0, p_old, 1.0)), 0.0)
    return (p_new * g).sum(axis=1), g


def policy_objective(theta, batch: Batch, temperature: float, clip_eps: float, kl_coeff: float
                     ) -> tuple[float, np.ndarray, dict]:
    """Clipped surrogate minus ``kl_coeff * KL(pi_new || pi_old)`` and its
    exact gradient with respect to ``theta``."""
    n = len(batch)
    idx = np.arange(n)
    probs = _probs(theta, temperature, batch.x, batch.mask)
    r = probs[idx, batch.actions] / np.exp(batch.old_logp)
    a = batch.advantages
    unclipped = r * a
    clipped = np.clip(r, 1 - clip_eps, 1 + clip_eps) * a
    surr = np.minimum(unclipped, clipped)
    # the min selects the unclipped branch (gradient flows) unless clipping binds
    active = unclipped <= clipped
    coef = np.where(active, a * r, 0.0)
    dz = -probs * coef[:, None]
    dz[idx, batch.actions] += coef
    kl, g = _kl_rows(probs, batch.old_probs, batch.mask)
    dz -= kl_coeff * probs * (g - kl[:, None])
    grad = batch.x.T @ dz / (n * temperature)
    obj = float(surr.mean() - kl_coeff * kl.mean())
    return obj, grad, {"surrogate": float(surr.mean()), "kl": float(kl.mean()),
                       "clip_frac": float(np.mean(~active))}


def value_loss(v: ValueParams, batch: Batch) -> tuple[float, np.ndarray, float]:
    err = batch.feats @ v.omega + v.bias - batch.returns
    return float(np.mean(err ** 2)), 2.0 * batch.feats.T @ err / len(batch), float(2.0 * err.mean())


def ppo_update(batch: Batch, p: PolicyParams, v: ValueParams, cfg: PpoConfig
               ) -> tuple[PolicyParams, ValueParams, dict]:
    """``cfg.epochs`` full-batch ascent steps on the clipped objective and
    descent steps on the value MSE."""
    if len(batch) == 0:
        raise ContractError("empty batch")
    if not np.all(np.isfinite(batch.advantages)):
        return p, v, {"diverged": True}
    if cfg.normalize_advantages and len(batch) > 1:
        std = batch.advantages.std()
        adv = (batch.advantages - batch.advantages.mean()) / (std if std > 1e-8 else 1.0)
        batch = Batch(batch.x, batch.feats, batch.mask, batch.actions, batch.old_logp, batch.old_probs,
                      adv, batch.returns)
    theta = p.theta.copy()
    omega, bias = v.omega.copy(), v.bias
    stats: dict = {"diverged": False}
    for _ in range(cfg.epochs):
        with np.errstate(invalid="ignore", over="ignore"):  # non-finite results are caught below
            obj, grad, info = policy_objective(theta, batch, p.temperature, cfg.clip_eps, cfg.kl_coeff)
            vl, g_om, g_b = value_loss(ValueParams(omega, bias), batch)
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(g_om)) and math.isfinite(g_b)):
            return p, v, {"diverged": True}
        theta = theta + cfg.lr * grad
        omega = omega - cfg.value_lr * cfg.value_coeff * g_om
        bias = bias - cfg.value_lr * cfg.value_coeff * g_b
        stats.update(info)
        stats["value_loss"] = vl
        stats["objective"] = obj
    if not np.all(np.isfinite(theta)):
        return p, v, {"diverged": True}
    return PolicyParams(theta, p.temperature, p.prompt_dim), ValueParams(omega, bias), stats


# -- rollouts and training ----------------------------------------------------------------------

def trajectory_batch(trajs, v: ValueParams, cfg: PpoConfig, prompt_dim: int = 0) -> Batch:
    xs, fs, masks, acts, logps, probs, advs, rets = [], [], [], [], [], [], [], []
    for traj in trajs:
        infos = traj.extras
        feats = np.array([info["x"][prompt_dim:] for info in infos])
        vals = np.append(feats @ v.omega + v.bias, 0.0)
        adv = gae(traj.rewards, vals, cfg.gamma, cfg.lam)
        for t, info in enumerate(infos):
            xs.append(info["x"])
            fs.append(feats[t])
            masks.append(info["mask"])
            acts.append(info["action"])
            logps.append(info["logp"])
            probs.append(info["probs"])
        advs.append(adv)
        rets.append(adv + vals[:-1])
    return Batch(np.array(xs), np.array(fs), np.array(masks), np.array(acts, dtype=np.int64),
                 np.array(logps), np.array(probs), np.concatenate(advs), np.concatenate(rets))


@dataclass
class CurveRow:
    iteration: int
    mean_return: float
    mean_n: float
    mean_final_gdl: float
    success_rate: float

    def as_tuple(self):
        return (self.iteration, self.mean_return, self.mean_n, self.mean_final_gdl, self.success_rate)


@dataclass
class TrainResult:
    policy: PolicyParams
    value: ValueParams
    curve: list = field(default_factory=list)
    diverged: int = 0


def train(tasks, cfg: PpoConfig = PpoConfig(), rollouts_per_iter: int | None = None, iters: int = 100,
          seed: int = 0, env_cfg: EnvConfig = EnvConfig(), space: ActionSpace | None = None,
          policy: PolicyParams | None = None, value: ValueParams | None = None, scorer=None,
          on_iter=None) -> TrainResult:
    """PPO over ``tasks`` (a list of ``(graph, query)`` pairs).

    Each iteration samples ``rollouts_per_iter`` tasks (default
    ``cfg.batch``), rolls them out, computes GAE and applies one update.
    """
    space = space or ActionSpace.default()
    p = policy.copy() if policy is not None else PolicyParams.init(len(space))
    v = value.copy() if value is not None else ValueParams.init()
    env_cfg = EnvConfig(env_cfg.n_max, env_cfg.gdl_weights, env_cfg.reward_weights, cfg.gamma)
    rollouts = rollouts_per_iter or cfg.batch
    rng = np.random.default_rng(seed)
    result = TrainResult(p, v)
    for it in range(iters):
        agent = LinearPolicy(p, space)
        trajs = []
        for _ in range(rollouts):
            g, q = tasks[int(rng.integers(len(tasks)))]
            trajs.append(run_episode(agent, g, q, env_cfg, int(rng.integers(2**63)), scorer))
        batch = trajectory_batch(trajs, v, cfg, p.prompt_dim)
        new_p, new_v, stats = ppo_update(batch, p, v, cfg)
        if stats.get("diverged"):
            result.diverged += 1
            log.warning("iteration %d: update diverged and was skipped", it)
        else:
            p, v = new_p, new_v
        row = CurveRow(it, float(np.mean([t.discounted_return for t in trajs])),
                       float(np.mean([t.N for t in trajs])),
                       float(np.mean([t.final_gdl for t in trajs])),
                       float(np.mean([t.terminal_eval for t in trajs])))
        result.curve.append(row)
        if on_iter is not None:
            on_iter(row, p, v)
    result.policy, result.value = p, v
    return result


def evaluate(params: PolicyParams, tasks, episodes: int, seed: int, temperature: float = 0.7,
             env_cfg: EnvConfig = EnvConfig(), space: ActionSpace | None = None, prompt=None,
             scorer=None) -> dict:
    """Success rate, mean N and mean final GDL at a sampling temperature."""
    space = space or ActionSpace.default()
    agent = LinearPolicy(params.with_temperature(temperature), space, prompt)
    rng = np.random.default_rng(seed)
    trajs = []
    for i in range(episodes):
        g, q = tasks[i % len(tasks)]
        trajs.append(run_episode(agent, g, q, env_cfg, int(rng.integers(2**63)), scorer))
    return {"success": float(np.mean([t.terminal_eval for t in trajs])),
            "mean_n": float(np.mean([t.N for t in trajs])),
            "final_gdl": float(np.mean([t.final_gdl for t in trajs])), "trajectories": trajs}


def bandit_probability(cfg: PpoConfig = PpoConfig(), updates: int = 200, seed: int = 0,
                       batch_size: int | None = None) -> tuple[float, list[float]]:
    """Two-armed bandit: arm 1 pays 1, arm 0 pays 0. Single-step episodes,
    constant feature 1, no value baseline beyond the learned bias."""
    rng = np.random.default_rng(seed)
    p = PolicyParams(np.zeros((1, 2)))
    v = ValueParams(np.zeros(1), 0.0)
    n = batch_size or cfg.batch
    mask = np.ones((n, 2), dtype=bool)
    x = np.ones((n, 1))
    history = []
    for _ in range(updates):
        probs = masked_softmax(p.theta[0] / p.temperature, np.ones(2, dtype=bool))
        acts = rng.choice(2, size=n, p=probs)
        rewards = acts.astype(np.float64)
        adv = rewards - (v.omega[0] + v.bias)
        batch = Batch(x, x, mask, acts, np.log(probs[acts]), np.tile(probs, (n, 1)), adv, rewards)
        p, v, _ = ppo_update(batch, p, v, cfg)
        history.append(float(masked_softmax(p.theta[0], np.ones(2, dtype=bool))[1]))
    return history[-1], history
