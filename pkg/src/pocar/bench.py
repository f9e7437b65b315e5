"""Directional benchmark suites.

Each suite trains the PPO variants it needs at the preset budgets, evaluates
them next to the hand-designed baselines and returns a list of
:class:`Check` results.  Claims about trained agents are counted per
training seed and pass when they hold on a majority (at least 3 of 5).
"""
from __future__ import annotations

import tempfile
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from . import nn
from .harness import ExperimentConfig, MetricsSeries, make_env, run_eval, run_training

EVAL_SEED = 10_000  # evaluation trials use seeds EVAL_SEED + i, disjoint from training seeds


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


@contextmanager
def _workdir(path):
    if path is not None:
        Path(path).mkdir(parents=True, exist_ok=True)
        yield Path(path)
    else:
        with tempfile.TemporaryDirectory(prefix="pocar-bench-") as tmp:
            yield Path(tmp)


def evaluate(env: str, agent: str, workdir, seed: int = 0, env_params=None, ppo=None,
             trials: int = 10) -> MetricsSeries:
    """Train (for PPO agents) with ``seed`` and evaluate over ``trials`` episodes."""
    cfg = ExperimentConfig(env=env, agent=agent, env_params=dict(env_params or {}), ppo=dict(ppo or {}),
                           trials=trials, seed=EVAL_SEED)
    ckpt = run_training(cfg, workdir, seed=seed).checkpoint if cfg.is_ppo else None
    return run_eval(cfg, ckpt)


def _majority(flags) -> bool:
    flags = list(flags)
    return sum(flags) >= (3 if len(flags) >= 5 else (len(flags) // 2 + 1))


def _fmt(values) -> str:
    return "[" + ", ".join(f"{v:.3g}" for v in values) + "]"


# -- suites ----------------------------------------------------------------------

def smoke(seeds=range(5), workdir=None) -> list[Check]:
    """Two-armed bandit: plain PPO (no fairness signal) must find the paying arm."""
    probs, times = [], []
    with _workdir(workdir) as wd:
        for s in seeds:
            cfg = ExperimentConfig(env="bandit", agent="a_ppo", trials=1)
            t0 = time.perf_counter()
            art = run_training(cfg, wd, seed=s)
            times.append(time.perf_counter() - t0)
            nets, _ = nn.load_checkpoint(art.checkpoint)
            probs.append(float(nn.forward(nets["policy"], [1.0])[0][0]))
    return [
        Check("bandit convergence", all(p > 0.95 for p in probs), f"pi(optimal arm) per seed {_fmt(probs)}"),
        Check("bandit runtime", max(times) < 60.0, f"max training time {max(times):.2f}s"),
    ]


def attention(seeds=range(5), workdir=None) -> list[Check]:
    with _workdir(workdir) as wd:
        greedy = evaluate("attention", "purely_greedy", wd)
        g_cum = greedy.cumulative_reward().mean()
        beats, fairer, rows = [], [], []
        for s in seeds:
            m = {a: evaluate("attention", a, wd, seed=s) for a in ("g_ppo", "r_ppo", "a_ppo")}
            cums = {a: v.cumulative_reward().mean() for a, v in m.items()}
            deltas = {a: v.delta_summary().mean() for a, v in m.items()}
            beats.append(all(c >= g_cum for c in cums.values()))
            fairer.append(deltas["a_ppo"] < deltas["g_ppo"])
            rows.append(f"seed {s}: cum G/R/A {cums['g_ppo']:.1f}/{cums['r_ppo']:.1f}/{cums['a_ppo']:.1f} "
                        f"delta G/A {deltas['g_ppo']:.4f}/{deltas['a_ppo']:.4f}")
    return [
        Check("attention: every PPO variant out-earns purely greedy", _majority(beats),
              f"greedy cum {g_cum:.1f}; holds on {sum(beats)}/{len(beats)} seeds; " + "; ".join(rows)),
        Check("attention: A-PPO fairer than G-PPO", _majority(fairer),
              f"holds on {sum(fairer)}/{len(fairer)} seeds"),
    ]


def attention_hard(seeds=range(5), workdir=None) -> list[Check]:
    params = {"sites": 10}
    initial = float(make_env("attention", params).cfg.rates0().mean())
    with _workdir(workdir) as wd:
        greedy = evaluate("attention", "purely_greedy", wd, env_params=params)
        g_final = greedy.mean("mean_rate")[-1]
        contained, fairer, rows = [], [], []
        for s in seeds:
            a = evaluate("attention", "a_ppo", wd, seed=s, env_params=params)
            r = evaluate("attention", "r_ppo", wd, seed=s, env_params=params)
            a_final = a.mean("mean_rate")[-1]
            contained.append(a_final < initial)
            fairer.append(a.delta_summary().mean() <= r.delta_summary().mean())
            rows.append(f"seed {s}: A final rate {a_final:.3f}, delta A/R "
                        f"{a.delta_summary().mean():.4f}/{r.delta_summary().mean():.4f}")
    return [
        Check("hard attention: purely greedy rate runs away", g_final > 2 * initial,
              f"initial mean rate {initial:.3f}, final {g_final:.3f}"),
        Check("hard attention: A-PPO keeps mean rate below its start", _majority(contained),
              f"holds on {sum(contained)}/{len(contained)} seeds; " + "; ".join(rows)),
        Check("hard attention: A-PPO at least as fair as R-PPO", _majority(fairer),
              f"holds on {sum(fairer)}/{len(fairer)} seeds"),
    ]


def lending(seeds=range(5), workdir=None) -> list[Check]:
    fairer, profits, rows = [], [], []
    with _workdir(workdir) as wd:
        for s in seeds:
            a = evaluate("lending", "a_ppo", wd, seed=s)
            g = evaluate("lending", "g_ppo", wd, seed=s)
            cash = a.mean("bank_cash")[-1]
            fairer.append(a.delta_summary().mean() < g.delta_summary().mean())
            profits.append(cash > 0)
            rows.append(f"seed {s}: delta A/G {a.delta_summary().mean():.4f}/{g.delta_summary().mean():.4f} "
                        f"A cash {cash:.2f} G cash {g.mean('bank_cash')[-1]:.2f}")
    return [
        Check("lending: A-PPO fairer than G-PPO", _majority(fairer),
              f"holds on {sum(fairer)}/{len(fairer)} seeds; " + "; ".join(rows)),
        Check("lending: A-PPO ends with positive bank cash", _majority(profits),
              f"holds on {sum(profits)}/{len(profits)} seeds"),
    ]


def disease(seeds=range(5), workdir=None, trials: int = 200) -> list[Check]:
    with _workdir(workdir) as wd:
        rand = evaluate("disease", "random", wd, trials=trials)
        maxn = evaluate("disease", "max_neighbor", wd, trials=trials)
        q = maxn.horizon // 4
        first, last = maxn.delta[:, :q].mean(), maxn.delta[:, -q:].mean()
        r_final = rand.mean("delta")[-1]
        below, rows = [], []
        for s in seeds:
            finals = {a: evaluate("disease", a, wd, seed=s, trials=trials).mean("delta")[-1]
                      for a in ("a_ppo", "r_ppo")}
            below.append(all(v < r_final for v in finals.values()))
            rows.append(f"seed {s}: final delta A/R {finals['a_ppo']:.4f}/{finals['r_ppo']:.4f}")
    return [
        Check("disease: max-neighbor violation grows", last > first,
              f"first-quarter mean {first:.4f}, last-quarter mean {last:.4f}"),
        Check("disease: A-PPO and R-PPO end fairer than random", _majority(below),
              f"random final {r_final:.4f}; holds on {sum(below)}/{len(below)} seeds; " + "; ".join(rows)),
        Check("disease: random fairer than max-neighbor",
              rand.delta_summary().mean() < maxn.delta_summary().mean(),
              f"mean delta random {rand.delta_summary().mean():.4f}, max-neighbor {maxn.delta_summary().mean():.4f}"),
    ]


def baselines(seeds=range(5), workdir=None) -> list[Check]:
    """Baseline-only claims; no training involved."""
    out = []
    with _workdir(workdir) as wd:
        params = {"sites": 10}
        initial = float(make_env("attention", params).cfg.rates0().mean())
        g = evaluate("attention", "purely_greedy", wd, env_params=params)
        out.append(Check("hard attention: purely greedy rate runs away", g.mean("mean_rate")[-1] > 2 * initial,
                         f"initial {initial:.3f}, final {g.mean('mean_rate')[-1]:.3f}"))
        rand = evaluate("disease", "random", wd, trials=200)
        maxn = evaluate("disease", "max_neighbor", wd, trials=200)
        q = maxn.horizon // 4
        out.append(Check("disease: max-neighbor violation grows",
                         maxn.delta[:, -q:].mean() > maxn.delta[:, :q].mean(),
                         f"{maxn.delta[:, :q].mean():.4f} -> {maxn.delta[:, -q:].mean():.4f}"))
        out.append(Check("disease: random fairer than max-neighbor",
                         rand.delta_summary().mean() < maxn.delta_summary().mean(),
                         f"{rand.delta_summary().mean():.4f} < {maxn.delta_summary().mean():.4f}"))
    return out


SUITES = {
    "smoke": smoke,
    "baselines": baselines,
    "attention": attention,
    "attention-hard": attention_hard,
    "lending": lending,
    "disease": disease,
}


def run_suite(name: str, seeds=range(5), workdir=None) -> list[Check]:
    try:
        suite = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}") from None
    return suite(seeds=seeds, workdir=workdir)


def summary(checks) -> str:
    return "\n".join(c.line() for c in checks)

