"""Smoke test for the energymix Python extension.

Build and run from the repository root:

    cargo build --release -p energymix-py --features extension-module
    cp target/release/libenergymix_py.so python/energymix.so   # .dylib on macOS
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import energymix as em  # noqa: E402


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    # standard normal: ES(N(0,1), 0) = sqrt(2/pi) - 1/sqrt(pi)
    n01 = em.MixtureParams([1.0], [0.0], [1.0])
    assert close(em.energy_score(n01, 0.0), math.sqrt(2 / math.pi) - 1 / math.sqrt(math.pi), 1e-12)
    assert close(em.log_score(n01, 0.0), 0.5 * math.log(2 * math.pi), 1e-12)

    p = em.MixtureParams([0.3, 0.7], [-1.0, 2.0], [0.5, 1.5])
    mean, var, std = p.moments()
    assert close(mean, 1.1, 1e-12)
    assert close(p.cdf(p.quantile(0.9)), 0.9, 1e-9)
    lo, hi = p.central_interval(0.95)
    assert lo < mean < hi

    est, se = em.energy_score_monte_carlo(p, 0.3, 100_000, 7)
    assert abs(est - em.energy_score(p, 0.3)) < 4 * se

    dw, dm, ds = em.hybrid_score_grad(p, 0.3, 0.5)
    h = 1e-6
    bumped = em.MixtureParams(p.weights, [p.means[0] + h, p.means[1]], p.stds)
    bumped_down = em.MixtureParams(p.weights, [p.means[0] - h, p.means[1]], p.stds)
    fd = (em.hybrid_score(bumped, 0.3, 0.5) - em.hybrid_score(bumped_down, 0.3, 0.5)) / (2 * h)
    assert close(dm[0], fd, 1e-5)

    try:
        em.MixtureParams([0.5, 0.6], [0.0, 1.0], [1.0, 1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("weights not summing to one should raise")

    data = em.generate("ex1", 200, 3)
    assert len(data["train"]["x"]) == 200 and len(data["val"]["x"]) == 40 and len(data["test"]["x"]) == 300
    rows = lambda part: [[v] for v in data[part]["x"]]
    model = em.train(rows("train"), data["train"]["y"], rows("val"), data["val"]["y"], k=1, eta=0.5, epochs=100, seed=1)
    preds = model.predict(rows("test"))
    assert len(preds) == 300 and all(q.k == 1 for q in preds)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.json")
        model.save(path)
        again = em.Model.load(path)
        assert again.predict(rows("test")[:5])[0].means == preds[0].means

    report = em.gradcheck(cases=3, seed=0, mc_draws=20_000, properness_draws=10_000)
    assert all(row[4] for row in report), report

    print("smoke test passed")


if __name__ == "__main__":
    main()
