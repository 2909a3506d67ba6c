"""Smoke test for the hetfl extension module.

Build and install first, e.g. `pip install maturin && maturin build -m
crates/python/Cargo.toml --release` then `pip install target/wheels/hetfl-*.whl`.
"""

from fractions import Fraction as F

import hetfl


def main():
    fig2 = hetfl.Instance.corpus("fig2")
    assert fig2.n == 4 and fig2.m == 2 and fig2.k == 1
    assert fig2.agents[1] == (F(1, 6), [1, 2])

    welfare, placements = hetfl.optimal(fig2)
    assert welfare == F(13, 6), welfare

    middle = hetfl.evaluate("middle", fig2)
    assert middle["expected_welfare"] == F(11, 6)
    assert middle["lottery"] == [(F(1), [(1, F(1, 2))])]

    worst = hetfl.ratio("rd:optimal", hetfl.Instance.corpus("rd-worst-case"))
    assert worst["ratio"] == F(3, 2) and worst["within_bound"] is True

    prd = hetfl.evaluate("rd:fixed:1/2", hetfl.Instance.corpus("prd"))
    assert prd["expected_welfare"] == F(79, 4)

    report = hetfl.audit("rd:optimal", hetfl.Instance.corpus("fig3"), setting="general", grid=10)
    assert report["verdict"] == "FAIL"
    assert any(
        v["coalition"] == [4] and v["utility_before"] == [F(1, 4)] and v["utility_after"] == [F(3, 10)]
        for v in report["violations"]
    )
    assert hetfl.audit("middle", hetfl.Instance.corpus("fig1"), grid=8)["verdict"] == "PASS"

    assert hetfl.rd_closedform_ratio(3, 0, 1, 1, 1, 0) == F(3, 2)
    assert hetfl.rd_closedform_ratio(2, 0, 1, 1, 1, "0") == F(10, 7)

    custom = hetfl.Instance([(F(0), [1]), ("1/2", [1, 2]), (1, [2])], utility_class="min")
    assert hetfl.Instance.from_json(custom.to_json()) == custom
    assert custom.utility_class == "min"

    lit = hetfl.Instance([(0, [1]), (1, [2]), (0, [1, 2])], m=3, k=2, utility_class="max")
    assert hetfl.ratio("km-middle", lit)["ratio"] == 2

    rows = hetfl.reproduce("fig2")
    assert rows and all(r["holds"] for r in rows)
    assert {r["expected"] for r in rows} >= {F(13, 6), F(11, 6), F(13, 11)}

    for bad in (lambda: hetfl.Instance([(0.5, [1])]), lambda: hetfl.Instance.corpus("nope"),
                lambda: hetfl.evaluate("mirror", hetfl.Instance.corpus("km-nongsp"))):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    print("hetfl smoke test passed")


if __name__ == "__main__":
    main()
