"""Smoke test for the mgcp_rd_py extension module.

Run after building the extension, for example:

    cargo build --release -p mgcp-rd-python --features extension-module
    cp target/release/libmgcp_rd_py.so python/mgcp_rd_py.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import mgcp_rd_py as m  # noqa: E402


def check(cond, message):
    if not cond:
        raise AssertionError(message)


def main():
    data = m.simulate_dataset(1, seed=3)
    check(len(data) == 5 and data.dim == 1, repr(data))
    check(data.ids == ["1", "2", "3", "4", "5"], data.ids)
    x, y = data.output(4)
    check(len(x) == len(y) == 10, "target output has 10 points")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "d.csv")
        check(data.to_csv(path) == 50, "50 rows written")
        again = m.Dataset.from_csv(path)
        check(again.output(4) == data.output(4), "csv round trip")
        try:
            m.Dataset.from_csv(os.path.join(tmp, "missing.csv"))
            raise AssertionError("missing file accepted")
        except OSError:
            pass

    pair = m.fit_pair(data.standardized(), 0, 4, penalty="none", restarts=1)
    params = json.loads(pair.params_json())
    check(params["xi0"] == pair.xi0, "xi0 in parameter JSON")
    nll = m.pair_nll(data.standardized(), 0, 4, pair.params_json())
    check(abs(nll - pair.objective) < 1e-6 * max(1.0, abs(nll)), (nll, pair.objective))

    model = m.TargetModel.fit(data, "5", penalty="l1", lambda_grid=[0.01], restarts=1)
    check(model.target == "5" and len(model.pairs()) == 4, "four pairwise submodels")
    preds = model.predict(x)
    inside = sum(abs(mu - t) <= 2 * math.sqrt(v) for (mu, v), t in zip(preds, y))
    check(inside >= 9, f"{inside} of 10 training points inside 2 sd")
    restored = m.TargetModel.from_json(model.to_json())
    check(restored.predict(x) == preds, "model JSON round trip")
    check(model.predict([]) == [], "empty prediction")
    try:
        model.predict([[0.0, 1.0]])
        raise AssertionError("dimension mismatch accepted")
    except ValueError:
        pass

    gcp = m.gcp_predict(data, 4, [[0.5]], restarts=1)
    check(len(gcp) == 1 and gcp[0][1] > 0, gcp)

    mean, var = m.poe([(1.0, 1.0), (3.0, 1.0)], [0.5, 0.5])
    check(abs(mean - 2.0) < 1e-12 and abs(var - 1.0) < 1e-12, (mean, var))
    check(m.mae([1.0, 2.0], [2.0, 4.0]) == 1.5, "mae")
    c = m.cross_covariance((1.0, [1.0]), (1.0, [1.0]), 1.0, [0.0])
    check(c > 0, c)

    try:
        m.fit_pair(data, 0, 0)
        raise AssertionError("self pair accepted")
    except ValueError:
        pass

    print("python smoke test passed")


if __name__ == "__main__":
    main()
