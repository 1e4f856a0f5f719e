"""Smoke test for the pyctxform extension module.

Build the module first, then run from the repository root:

    cargo build -p ctxform-python --release --features extension-module
    cp target/release/libpyctxform.so python/pyctxform.so
    python3 python/smoke_test.py

or install it with `maturin develop -m crates/python/Cargo.toml`.
"""

import json
import math
import pathlib
import sys

HERE = pathlib.Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

import pyctxform as cf  # noqa: E402

FIXTURES = HERE.parent / "fixtures"


def close(a, b, tol):
    return abs(a - b) <= tol


def check_projection():
    d = cf.BranchData(0.3, 0.6, 0.2)
    assert close(d.glued_projection(math.pi / 2), d.ltp(), 1e-12)
    fit = d.extract_phase(d.glued_projection(1.1))
    assert fit["feasible"] and close(fit["theta"], 1.1, 1e-9)


def check_embedding():
    pr = cf.Behavior.load(str(FIXTURES / "pr_box.json"))
    cert = pr.check_embedding()
    assert cert["status"] == "non-embeddable", cert["status"]
    local = cf.Behavior(json.loads((FIXTURES / "chsh_embeddable.json").read_text()))
    assert local.check_embedding()["status"] == "embeddable"
    bad = json.loads((FIXTURES / "invalid_behavior.json").read_text())
    assert cf.validate_behavior(bad), "invalid fixture should report violations"
    try:
        cf.Behavior(bad)
    except cf.CtxformError:
        pass
    else:
        raise AssertionError("invalid behavior accepted")


def check_bell():
    pr = cf.BipartiteBehavior.pr_box()
    assert close(pr.chsh(), 4.0, 1e-12)
    h = math.sqrt(2) / 2
    q = cf.BipartiteBehavior.from_correlators([[h, h], [h, -h]])
    dec = q.local_decomposition()
    assert close(dec["witness"]["margin"], 2 * math.sqrt(2) - 2, 1e-6)
    assert q.no_signalling()["pass"]


def check_bookkeeping():
    store = cf.Behavior.load(str(FIXTURES / "store_context.json"))
    assert close(store.min_bookkeeping()["I_M_C"], 1.0, 1e-9)


def check_holonomy():
    flat = cf.Atlas((FIXTURES / "atlas_flat.json").read_text())
    assert flat.flatness_check()["flat"]
    skew = cf.Atlas((FIXTURES / "atlas_nonflat.json").read_text())
    h = skew.loop_holonomy(["w0", "w1", "w2", "w0"])
    assert not h["flat"]
    gauged = skew.gauge_transform({"w1": 0.7, "w2": -1.3})
    h2 = gauged.loop_holonomy(["w0", "w1", "w2", "w0"])
    for atom, phase in h["per_branch_phase"].items():
        assert close(phase, h2["per_branch_phase"][atom], 1e-12)


def check_intervention():
    qubit = cf.InterventionModel((FIXTURES / "qubit_45.json").read_text())
    assert qubit.order_effect("A", "B")["tv"] > 0.01
    commuting = cf.InterventionModel((FIXTURES / "commuting_model.json").read_text())
    assert commuting.order_effect("A", "B")["tv"] <= 1e-9


def check_tradeoff():
    config = json.loads((FIXTURES / "tradeoff.json").read_text())
    config["trials"] = 2000
    config["replicates"] = 1
    report = cf.run_tradeoff(config, seed=3)
    assert [row["m"] for row in report["runs"][0]["levels"]] == config["memory_levels"]
    assert cf.tradeoff_csv(config, seed=3).startswith("seed,m,I_abs,theta,order_effect,I_MC")


def main():
    checks = [
        check_projection,
        check_embedding,
        check_bell,
        check_bookkeeping,
        check_holonomy,
        check_intervention,
        check_tradeoff,
    ]
    for check in checks:
        check()
        print(f"ok  {check.__name__}")
    print("pyctxform smoke test passed")


if __name__ == "__main__":
    main()
