"""Smoke test for the ccdrl Python module.

Build and install first, e.g. ``maturin develop -m crates/py/Cargo.toml --release``.
"""

import math
import os
import sys
import tempfile

import ccdrl


def check(name, ok):
    print(f"{'ok  ' if ok else 'FAIL'} {name}")
    return ok


def main():
    results = []
    n = ccdrl.hover_speed()
    level = [0.0] * 12
    d = ccdrl.state_derivative(level, [n] * 4, [0.15] * 4)
    results.append(check("hover is an equilibrium", max(abs(x) for x in d) < 1e-6))

    w = ccdrl.solve_weights([0.2] * 4)
    results.append(check("center weights", abs(sum(x * x for x in w) - 0.5) == 0.0))
    sv, rec, mn, sup = ccdrl.verify_weights(w, [0.2] * 4)
    results.append(check("center weights verify", sv < 1e-12 and rec < 1e-12 and sup <= 5))
    ws, _ = ccdrl.solve_weights_sqp([0.17, 0.22, 0.19, 0.24], seed=3)
    results.append(check("sqp weights sum to one", abs(sum(ws) - 1.0) < 1e-9))

    env = ccdrl.Env([0.15] * 4)
    env.reset(0)
    total = 0.0
    while not env.done:
        _, r, _, _, _ = env.step([n] * 4)
        total += r
    results.append(check("hover episode runs", math.isfinite(total) and env.steps > 0))

    policy, rewards = ccdrl.train([0.15] * 4, steps=4096, seed=1)
    results.append(check("training produces episodes", len(rewards) > 0))
    a = policy.mean_action(level)
    results.append(check("mean action within range", all(0.0 <= x <= 1000.0 for x in a)))
    ev = ccdrl.evaluate(policy, seed=2)
    results.append(check("evaluation reward bookkeeping", abs(sum(ev.rewards) - ev.accumulated_reward) < 1e-9))

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "p.ckpt")
        policy.save(path)
        back = ccdrl.Policy.load(path)
        results.append(check("checkpoint round trip", back.mean_action(level) == a))

    try:
        ccdrl.solve_weights([0.3, 0.2, 0.2, 0.2])
        results.append(check("out-of-bounds rejected", False))
    except ValueError as e:
        results.append(check("out-of-bounds rejected", str(e).startswith("arm-out-of-bounds")))

    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
