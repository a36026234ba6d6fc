"""Smoke test for the purge_lab extension module.

Build and install first:  pip install maturin && maturin develop -m crates/py/Cargo.toml
"""

import math
import os
import tempfile

import purge_lab


def main():
    lab = purge_lab.Lab(seed=0)
    vocab = lab.vocabulary
    assert len(vocab) > 100
    assert lab.target == "stephen king"
    assert "stephen king" in lab.forget_phrases
    print(f"vocabulary {len(vocab)}, {len(lab.forget_phrases)} forbidden phrases, {len(lab.queries)} queries")

    auto = lab.automaton
    assert auto.contains_forbidden("it was stephen king")
    assert auto.reward("it was bram stoker") == 1.0
    assert auto.find("the rich man") is None

    p0 = lab.leakage(samples=1000)["p"]
    policy, trace = lab.purge({"iterations": 4, "leakage_samples": 1000})
    p_final = trace["leakage"]["points"][-1][1]["p"]
    print(f"leakage {p0:.3f} -> {p_final:.3f} over {len(trace['steps'])} updates")
    assert p_final < p0

    report = lab.verify_suppression(trace, alpha=0.0, step_size=0.5, clip_epsilon=0.2)
    assert report["pass"], report
    pinsker = lab.verify_pinsker(policy, samples=500)
    assert pinsker["pass"], pinsker

    ev = lab.evaluate(policy, name="purge", config={"samples": 500})
    base_ev = lab.evaluate(lab.base, name="base", config={"samples": 500})
    print(f"forget recall {base_ev['forget_recall']:.3f} -> {ev['forget_recall']:.3f}")
    assert ev["forget_recall"] < base_ev["forget_recall"]

    ga, ga_trace, collapsed = lab.baseline("ga", {"epochs": 20, "leakage_samples": 0})
    assert len(ga_trace["steps"]) == 20 and not collapsed

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "purge.ckpt")
        policy.save(path, step=len(trace["steps"]))
        loaded = purge_lab.Policy.load(path)
        q = lab.queries[0]
        assert loaded.greedy(q) == policy.greedy(q)

    assert abs(purge_lab.suppression_bound(20, 0.0, 0.5, 0.2, 0.6, 0.0) - 0.9**20 * 0.6) < 1e-12
    assert abs(purge_lab.pinsker_bound(0.05) - math.sqrt(0.025)) < 1e-12
    assert abs(purge_lab.hoeffding_bound(1000, 0.05) - math.sqrt(math.log(80) / 2000)) < 1e-12
    adv = purge_lab.compute_advantages([1.0, 0.0, 1.0, 0.0])
    assert abs(sum(adv)) < 1e-12

    try:
        purge_lab.Lab(seed=0).purge({"group_size": 1})
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
