"""Smoke test of the ibcm_py extension module."""

import math

import ibcm_py


def main():
    area = ibcm_py.plate_area(8, q=3)
    exact = 1.0 - math.pi * 0.04
    assert abs(area - exact) / exact < 1e-8, area

    a = ibcm_py.plate_manufactured("rm", 2, 0.1, 2)
    rep = a.solve()
    assert rep.spd, rep
    l2, h1, _ = a.error_norms()
    assert 0.0 < l2 < h1 < 1.0, (l2, h1)
    b = ibcm_py.plate_manufactured("rm", 2, 0.1, 3)
    b.solve()
    assert b.error_norms()[0] < l2
    print("plate", a, "L2", l2, "->", b.error_norms()[0])

    try:
        ibcm_py.plate_manufactured("kl", 1, 0.1, 2)
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("KL with p = 1 must be rejected")

    ref = ibcm_py.folias_reference(2.5, 5.0, 20.0, 1.0)
    assert ref > 1.0, ref
    print("folias at r/a = 0.5:", ref)
    print("cases:", ibcm_py.cases())
    print("ok")


if __name__ == "__main__":
    main()
