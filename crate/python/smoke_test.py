"""Smoke test for the epiplan extension module.

Build and install first, e.g. `maturin develop --release` or
`pip install . --no-build-isolation`, then run `python python/smoke_test.py`.
"""

import itertools
import json
import math
import pathlib
import random
import sys
import tempfile

import epiplan

ROOT = pathlib.Path(__file__).resolve().parent.parent


def random_rows(rng, rows, cols):
    out = []
    for _ in range(rows):
        w = [rng.random() + 1e-3 for _ in range(cols)]
        s = sum(w)
        out.append([x / s for x in w])
    return out


def tiger():
    listen = [[1.0, 0.0], [0.0, 1.0]]
    reset = [[0.5, 0.5], [0.5, 0.5]]
    hear = [[0.85, 0.15], [0.15, 0.85]]
    blind = [[0.5, 0.5], [0.5, 0.5]]
    return epiplan.Model(
        [listen, reset, reset],
        [hear, blind, blind],
        [[1.0, 1.0], [100.0, -10.0], [-10.0, 100.0]],
    )


def check_solver():
    rng = random.Random(3)
    n, actions = 3, 2
    m = epiplan.Model(
        [random_rows(rng, n, n) for _ in range(actions)],
        [random_rows(rng, n, 2) for _ in range(actions)],
        [[10 * rng.random() for _ in range(n)] for _ in range(actions)],
    )
    policy = m.solve(3, 0.9)
    for _ in range(20):
        b = random_rows(rng, 1, n)[0]
        assert math.isclose(policy.value(b), m.expectimax(b, 3, 0.9), rel_tol=1e-9, abs_tol=1e-9)

    # posteriors weighted by observation probability give back the prediction
    b = [0.2, 0.5, 0.3]
    pred = m.predict(b, 1)
    mix = [0.0] * n
    for o, p in enumerate(m.obs_marginal(b, 1)):
        for s, w in enumerate(m.update(b, 1, o)):
            mix[s] += p * w
    assert all(abs(x - y) < 1e-12 for x, y in zip(mix, pred))

    t = tiger()
    p = t.solve(2, 1.0)
    action, value = p.action([0.5, 0.5])
    assert action == 0 and math.isclose(value, p.value([0.5, 0.5]))
    try:
        p.value([0.5, 0.5, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("mismatched belief accepted")


def check_epi():
    params = epiplan.TsirParams.seasonal_cosine(2.5e-5, 0.25, 0.97, 1500.0, 0.05, 1e6)
    assert len(params.beta_seasonal) == 24
    s, i, tau = params.step(45000.0, 1000.0, 0)
    assert tau == 1 and 0 <= i <= 1e6 and 0 <= s <= 1e6
    rows = params.simulate(45000.0, 1000.0, 0, 240, 1)
    fitted, stats = epiplan.calibrate(rows, 1e6)
    assert abs(fitted.alpha_mix - 0.97) <= 0.05
    worst = max(abs(math.log(b) / math.log(t) - 1) for b, t in zip(fitted.beta_seasonal, params.beta_seasonal))
    assert worst <= 0.05, worst
    assert stats["rows_used"] > 200


def check_planner():
    planner = epiplan.Planner(str(ROOT / "configs" / "tiny.toml"))
    model = planner.model()
    b0 = planner.initial_belief()
    assert len(b0) == planner.n_states == model.n_states
    golden = json.loads((ROOT / "crates" / "core" / "tests" / "golden" / "tiny.json").read_text())
    value = model.solve(golden["horizon"], golden["discount"]).value(b0)
    assert math.isclose(value, golden["initial_value"], rel_tol=1e-8), value
    sweep = planner.sweep()
    assert len(sweep["objective"]) == len(sweep["timing"])
    assert sweep["spread"][0] >= 1.0

    with tempfile.TemporaryDirectory() as out:
        config = str(ROOT / "configs" / "tiny.toml")
        for cmd in ("build", "solve", "report"):
            assert epiplan.run_cli([cmd, "--config", config, "--out", out, "--quiet"]) == 0
        assert (pathlib.Path(out) / "policy.json").exists()
        assert epiplan.run_cli(["solve", "--config", "/nonexistent.toml", "--quiet"]) == 1


def main():
    for name, check in [("solver", check_solver), ("epi", check_epi), ("planner", check_planner)]:
        check()
        print(f"{name}: ok")
    print(f"epiplan {epiplan.__version__}: all smoke checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
