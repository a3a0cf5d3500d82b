"""Smoke test for the scentnav Python bindings.

Build and install first:

    pip install --no-build-isolation -e crates/py
    python python/smoke_test.py
"""

import json
import math
import random

import scentnav


def check_memory():
    p = scentnav.MemoryParams()
    assert p.k_glob == 4
    # First view of an option with full scent and default weights.
    assert math.isclose(p.strength(1, 0, 0, 0.5), 0.5 + 1.5 * 0.5 + 0.8, rel_tol=1e-12)
    # Strength halves after five steps under the default decay rate.
    fresh = p.strength(1, 0, 0, 0.5)
    assert math.isclose(p.strength(1, 0, 5, 0.5), fresh / 2, rel_tol=1e-12)
    try:
        scentnav.MemoryParams(sigma=0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("sigma outside its range was accepted")


def check_layout():
    layout = scentnav.generate_layout("depth:4x4x4", goal=1, seed=7)
    again = scentnav.generate_layout("depth:4x4x4", goal=1, seed=7)
    assert layout.to_json() == again.to_json()
    assert len(layout) == 4 + 16 + 64
    round_trip = scentnav.Layout.from_json(layout.to_json())
    assert round_trip.to_json() == layout.to_json()
    assert layout.action_path_cost(layout.root[0]) == 1
    return layout


def check_env(layout):
    env = scentnav.Env(layout)
    rng = random.Random(3)
    features = env.reset(seed=5)
    assert all(0.0 <= x <= 1.0 for x in features)
    total, steps, success = 0.0, 0, False
    done = False
    while not done:
        legal = [i for i, ok in enumerate(env.legal_actions()) if ok]
        features, reward, done, success = env.step(rng.choice(legal))
        total += reward
        steps += 1
        assert all(0.0 <= x <= 1.0 for x in features)
    expected = 20.0 * success - 0.01 * (steps - success)
    assert math.isclose(total, expected, abs_tol=1e-9), (total, expected)


def check_stats():
    assert scentnav.lostness(4, 4, 4) == 0.0
    r = scentnav.mann_whitney([1, 2, 3], [4, 5, 6])
    assert r["u"] == 0.0 and 0.0 < r["p_value"] < 1.0
    table = json.dumps({"dim": 2, "vectors": {"a": [1.0, 0.0], "b": [1.0, 1.0]}})
    assert math.isclose(scentnav.embedding_scent(table, "a", "b"), math.sqrt(0.5), rel_tol=1e-6)


def check_benchmark():
    config = """
[train]
total_episodes = 256

[study]
episodes = 4
"""
    means = scentnav.run_benchmark("position", config_toml=config, seed=11)
    assert set(means) == {"left", "right", "top", "bottom"}
    for steps, success in means.values():
        assert steps >= 1.0 and 0.0 <= success <= 1.0


def main():
    check_memory()
    layout = check_layout()
    check_env(layout)
    check_stats()
    check_benchmark()
    print("smoke test passed")


if __name__ == "__main__":
    main()
