"""Smoke test for the `nesc` extension module.

Build with `cargo build --release -p nesc-py`, then put `libnesc.so` on the path
as `nesc.so` (or install through maturin) and run this script.
"""

import math

import nesc


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok   {msg}")


g = nesc.Game.bilinear(2.0, -3.0)
check(g.n_agents == 2, "bilinear game has two agents")
check(g.known_ne == [2.0, -3.0], "known equilibrium")
check(abs(g.evaluate_cost(0, [3.0, -1.0]) - 2.0) < 1e-12, "cost of agent 0")
check(g.ne_residual([2.0, -3.0]) == 0.0, "residual vanishes at the equilibrium")
fd = nesc.finite_diff_pseudogradient(g, [0.5, 0.25])
pg = g.pseudogradient([0.5, 0.25])
check(max(abs(a - b) for a, b in zip(fd, pg)) < 1e-6, "finite differences match the pseudogradient")

market = nesc.Game.fixed_demand([172.0, 47.0, 66.0], 350.0)
check(market.n_agents == 4, "market has three producers and a regulator")
lo, monotone = nesc.monotonicity_probe(market, 200)
check(monotone, f"market is monotone (min inner product {lo:.3e})")

p = nesc.EscParams.uniform(2, 1.0, 1.0, 0.1, [0.7, 1.3])
check(nesc.lyapunov_rate([0.0, 0.0], [1.0, 1.0], g, p) <= 0.0, "Lyapunov rate is nonpositive")
check(nesc.lyapunov_value([2.0, -3.0], [2.0, -3.0], g, p) == 0.0, "Lyapunov value vanishes at rest")
dz, du = nesc.gr_flow_rhs([0.0, 0.0], [1.0, 1.0], g, p)
check(len(dz) == 2 and len(du) == 2, "golden-ratio flow returns both blocks")

cfg = nesc.ExperimentConfig.preset("bilinear")
cfg.set("solver.horizon", "50")
again = nesc.ExperimentConfig.from_text(cfg.to_text())
check(again.to_text() == cfg.to_text(), "config round-trips through text")
out = nesc.run_experiment(cfg)
check(out["diverged_at"] is None, "short bilinear run stays bounded")
check(math.isclose(out["times"][-1], 50.0), "run reaches the horizon")
check("ne_residual" in out["channels"], "residual channel recorded")

try:
    cfg.set("solver.step", "-1")
    nesc.run_experiment(cfg)
    check(False, "invalid step is rejected")
except ValueError:
    check(True, "invalid step raises ValueError")

ce = nesc.run_counterexample()
check(ce["rate"] > 0.0 and ce["control_rate"] <= 0.0, "projected counterexample increases V")

rows = nesc.run_validate()
check(all(passed for _, passed, _ in rows), f"validate suite ({len(rows)} checks)")
check(not all(passed for _, passed, _ in nesc.run_validate(flip_estimate_sign=True)), "sign flip is caught")

print("all smoke checks passed")
