"""Smoke test for the `crashforge` Python extension.

Build and install it first:

    pip install --no-build-isolation -e crates/python
"""

import math
import os
import sys
import tempfile

import crashforge


def main() -> int:
    rows = crashforge.scenarios()
    assert len(rows) == 15, rows
    assert sum(r["in_default_dataset"] for r in rows) == 12

    assert crashforge.parameter_count() == 251_019
    expected = round(120 * math.exp(-3.0) + 200 * (1 - math.exp(-3.0)))
    assert round(crashforge.fog(120.0, 60.0, 0.05, 200.0)) == expected

    w, h, pixels = crashforge.render_preview("RunningRedLight", 7)
    assert (w, h, len(pixels)) == (200, 66, 200 * 66)
    assert crashforge.render_preview("RunningRedLight", 7)[2] == pixels

    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "ds")
        stats = crashforge.generate(out, 12, 42, frame_rate=1)
        assert stats["episodes"] == 12
        assert len(stats["per_scenario"]) == 12
        assert crashforge.stats(out) == stats
        splits = crashforge.split(out, 1, (0.5, 0.25, 0.25))
        assert [e for e, _ in splits] == [6, 3, 3], splits

    try:
        crashforge.render_preview("NoSuchScenario", 1)
    except ValueError as e:
        assert "NoSuchScenario" in str(e)
    else:
        raise AssertionError("unknown scenario accepted")

    print("python smoke test: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
