"""
前向加噪与反向采样

三种反向步形式：祖先 ε 形式、后验 x₀ 形式与 DDIM (η = 0)。
run_reverse 以 CHAIN_BLOCK 为单位分块执行整条链，每步顺序为：
预测 x⁰_θ → 生成 x̂_{t-1} → 对 x̂_{t-1} 施加校正。
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..models.correction import CorrectionConfig
from ..models.grid import MomentStats, check_same_shape, sq_norm_per_dim
from ..models.schedule import NoiseSchedule, SigmaMode
from .correction import apply_variant, weights_for
from .denoiser import Denoiser, x0_to_eps
from .rng import Purpose, block_normal, map_blocks

logger = logging.getLogger(__name__)


def forward_perturb(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """x_t = √ᾱ_t·x₀ + √(1-ᾱ_t)·ε；t = 0 时原样返回 x₀"""
    check_same_shape(x0, eps)
    if not 0 <= t <= sched.T:
        raise ValueError(f"时间步 t={t} 超出范围 [0, {sched.T}]")
    ab = sched.alpha_bar[t]
    return np.sqrt(ab) * np.asarray(x0) + np.sqrt(1.0 - ab) * np.asarray(eps)


def ancestral_step(
    x_t: np.ndarray,
    eps_hat: np.ndarray,
    z: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    sigma: float | np.ndarray | None = None,
) -> np.ndarray:
    """
    (1/√α_t)·(x_t - ((1-α_t)/√(1-ᾱ_t))·ε̂) + σ_t·z

    sigma 缺省取 sched.sigma(t)；t = 1 时 z 强制为 0。
    """
    t = sched.check_t(t)
    check_same_shape(x_t, eps_hat)
    a, ab = sched.alpha[t], sched.alpha_bar[t]
    mean = (np.asarray(x_t) - (1.0 - a) / np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(a)
    if t == 1:
        return mean
    check_same_shape(x_t, z)
    if sigma is None:
        sigma = sched.sigma(t)
    return mean + sigma * np.asarray(z)


def posterior_step(
    x_t: np.ndarray,
    x0_hat: np.ndarray,
    z: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    sigma: float | np.ndarray | None = None,
) -> np.ndarray:
    """
    c₀·x̂₀ + c_t·x_t + σ·z，系数见 NoiseSchedule.posterior_coefs

    sigma 缺省取 √β̃_t；t = 1 时 z 强制为 0。
    """
    t = sched.check_t(t)
    check_same_shape(x_t, x0_hat)
    c_x0, c_xt = sched.posterior_coefs(t)
    mean = c_x0 * np.asarray(x0_hat) + c_xt * np.asarray(x_t)
    if t == 1:
        return mean
    check_same_shape(x_t, z)
    if sigma is None:
        sigma = np.sqrt(sched.beta_tilde[t])
    return mean + sigma * np.asarray(z)


def ddim_step(
    x_t: np.ndarray, eps_hat: np.ndarray, t: int, t_prev: int, sched: NoiseSchedule
) -> np.ndarray:
    """确定性 DDIM：√ᾱ_{t'}·x̂₀ + √(1-ᾱ_{t'})·ε̂"""
    t = sched.check_t(t)
    if not 0 <= t_prev < t:
        raise ValueError(f"DDIM 要求 0 <= t_prev < t，收到 t={t}, t_prev={t_prev}")
    check_same_shape(x_t, eps_hat)
    ab, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t_prev]
    x0_hat = (np.asarray(x_t) - np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(ab)
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * np.asarray(eps_hat)


def step_sigma(model: Denoiser, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> float | np.ndarray:
    """
    反向步噪声尺度

    posterior 模式下为 √(β̃_t + c₀²·Var[x₀|x_t])，逐元素。
    """
    if sched.sigma_mode is SigmaMode.POSTERIOR:
        c_x0, _ = sched.posterior_coefs(t)
        return np.sqrt(sched.beta_tilde[t] + c_x0**2 * model.posterior_var(x_t, t))
    return sched.sigma(t)


def ddim_timesteps(T: int, steps: int) -> list[int]:
    """从 T 到 0 的等间隔整数时间步（严格递减）"""
    if not 1 <= steps <= T:
        raise ValueError(f"DDIM 步数必须位于 [1, {T}]，收到 {steps}")
    ts = np.round(np.linspace(T, 0, steps + 1)).astype(int)
    return [int(t) for t in ts]


@dataclass
class Trajectory:
    """单条链的记录；states 按 timesteps（从 T 递减到 0）排列"""

    chain_id: int
    seed: int
    timesteps: list[int]
    sq_norms: np.ndarray
    states: np.ndarray | None = None
    recorded_x0_hat: np.ndarray | None = None
    recorded_eps_hat: np.ndarray | None = None


@dataclass
class TrajectorySet:
    """
    一次 run_reverse 的全部输出

    state_stats 以 t 为键（含 T 的初值与 0 的终值），
    eps_stats/x0_stats 以预测所在的 t 为键。
    """

    seed: int
    n_chains: int
    timesteps: list[int]
    final: np.ndarray
    sq_norms: np.ndarray
    state_stats: dict[int, MomentStats] = field(default_factory=dict)
    eps_stats: dict[int, MomentStats] = field(default_factory=dict)
    x0_stats: dict[int, MomentStats] = field(default_factory=dict)
    states: np.ndarray | None = None
    x0_hats: np.ndarray | None = None
    eps_hats: np.ndarray | None = None

    def chain(self, i: int) -> Trajectory:
        return Trajectory(
            chain_id=i,
            seed=self.seed,
            timesteps=self.timesteps,
            sq_norms=self.sq_norms[i],
            states=None if self.states is None else self.states[i],
            recorded_x0_hat=None if self.x0_hats is None else self.x0_hats[i],
            recorded_eps_hat=None if self.eps_hats is None else self.eps_hats[i],
        )

    def norm_rows(self) -> list[tuple[int, int, float]]:
        """trajectories.csv 的行：chain_id, t, mean_sq_norm"""
        return [
            (i, t, float(self.sq_norms[i, j]))
            for i in range(self.n_chains)
            for j, t in enumerate(self.timesteps)
        ]


@dataclass
class _BlockResult:
    final: np.ndarray
    sq_norms: np.ndarray
    state_stats: list[MomentStats]
    eps_stats: list[MomentStats]
    x0_stats: list[MomentStats]
    states: np.ndarray | None
    x0_hats: np.ndarray | None
    eps_hats: np.ndarray | None


def _merge_lists(a: list[MomentStats], b: list[MomentStats]) -> list[MomentStats]:
    return [x.merge(y) for x, y in zip(a, b)]


def run_reverse(
    model: Denoiser,
    sched: NoiseSchedule,
    corr: CorrectionConfig,
    n_chains: int,
    seed: int,
    record: tuple[str, ...] | list[str] = (),
    threads: int = 1,
    sampler: str = "ancestral",
    ddim_steps: int | None = None,
    shape: tuple[int, int, int] | None = None,
) -> TrajectorySet:
    """
    运行 n_chains 条反向链

    链 i 的全部随机数只取决于 (seed, i, t, purpose)，因此输出与
    threads 无关；各块统计按块序合并。
    """
    if n_chains < 1:
        raise ValueError(f"链数必须至少为 1，收到 {n_chains}")
    if sampler not in ("ancestral", "ddim"):
        raise ValueError(f"未知采样器: {sampler}")
    if shape is None:
        shape = model.shape
    shape = tuple(shape)
    record = set(record)

    if sampler == "ddim":
        timesteps = ddim_timesteps(sched.T, ddim_steps or sched.T)
    else:
        timesteps = list(range(sched.T, -1, -1))
    steps = list(zip(timesteps[:-1], timesteps[1:]))

    def run_block(block: int, start: int, stop: int) -> _BlockResult:
        n = stop - start
        x = block_normal(seed, Purpose.INIT, sched.T, block, n, shape)
        sq = np.empty((n, len(timesteps)))
        sq[:, 0] = sq_norm_per_dim(x)
        state_stats = [MomentStats.from_batch(x)]
        eps_stats: list[MomentStats] = []
        x0_stats: list[MomentStats] = []
        states = np.empty((n, len(timesteps)) + shape) if "states" in record else None
        x0_rec = np.empty((n, len(steps)) + shape) if "x0_hat" in record else None
        eps_rec = np.empty((n, len(steps)) + shape) if "eps_hat" in record else None
        if states is not None:
            states[:, 0] = x

        for j, (t, t_prev) in enumerate(steps):
            noise = (
                block_normal(seed, Purpose.BIAS_NOISE, t, block, n, shape)
                if model.needs_noise
                else None
            )
            x0_hat = model.predict_x0(x, t, noise)
            eps_hat = x0_to_eps(x, x0_hat, t, sched)
            if sampler == "ddim":
                x_next = ddim_step(x, eps_hat, t, t_prev, sched)
            elif t > 1:
                z = block_normal(seed, Purpose.STEP_NOISE, t, block, n, shape)
                x_next = ancestral_step(x, eps_hat, z, t, sched, step_sigma(model, x, t, sched))
            else:
                x_next = ancestral_step(x, eps_hat, np.zeros_like(x), t, sched)
            if corr.enabled:
                x_next = apply_variant(corr.mode, x_next, x0_hat, weights_for(corr, t, sched))

            eps_stats.append(MomentStats.from_batch(eps_hat))
            x0_stats.append(MomentStats.from_batch(x0_hat))
            if x0_rec is not None:
                x0_rec[:, j] = x0_hat
            if eps_rec is not None:
                eps_rec[:, j] = eps_hat
            x = x_next
            sq[:, j + 1] = sq_norm_per_dim(x)
            state_stats.append(MomentStats.from_batch(x))
            if states is not None:
                states[:, j + 1] = x

        logger.debug("块 %d（链 %d..%d）完成", block, start, stop - 1)
        return _BlockResult(x, sq, state_stats, eps_stats, x0_stats, states, x0_rec, eps_rec)

    results = map_blocks(run_block, n_chains, threads)

    head = results[0]
    state_stats, eps_stats, x0_stats = head.state_stats, head.eps_stats, head.x0_stats
    for r in results[1:]:
        state_stats = _merge_lists(state_stats, r.state_stats)
        eps_stats = _merge_lists(eps_stats, r.eps_stats)
        x0_stats = _merge_lists(x0_stats, r.x0_stats)

    def stack(attr: str) -> np.ndarray | None:
        parts = [getattr(r, attr) for r in results]
        return None if parts[0] is None else np.concatenate(parts)

    step_ts = [t for t, _ in steps]
    return TrajectorySet(
        seed=seed,
        n_chains=n_chains,
        timesteps=timesteps,
        final=np.concatenate([r.final for r in results]),
        sq_norms=np.concatenate([r.sq_norms for r in results]),
        state_stats=dict(zip(timesteps, state_stats)),
        eps_stats=dict(zip(step_ts, eps_stats)),
        x0_stats=dict(zip(step_ts, x0_stats)),
        states=stack("states"),
        x0_hats=stack("x0_hats"),
        eps_hats=stack("eps_hats"),
    )
