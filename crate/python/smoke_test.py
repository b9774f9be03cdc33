"""Smoke test for the speedsynth Python extension.

Build and install with `maturin develop -m crates/python/Cargo.toml --features extension-module`,
or copy target/release/libspeedsynth_py.so to speedsynth.so on PYTHONPATH.
"""

import math

import speedsynth as ss


def main():
    mu = ss.TargetMeasure.uniform(-1.0, 1.0)
    assert mu.support() == (-1.0, 1.0)
    assert abs(ss.wronskian_sup(mu, 0.0) - 4.0) < 1e-12

    m = ss.synthesize(mu, 0.0, 0.5, 4.0)
    assert m.speed_density(0.0) == 2.0
    assert m.boundaries() == ("inaccessible", "inaccessible")
    assert m.martingale_class() == "not-applicable"

    bm = ss.synthesize(ss.TargetMeasure.laplace(1.0), 0.0, 0.5)
    assert bm.wronskian == 2.0
    assert abs(bm.speed_density(1.3) - 1.0) < 1e-12
    assert abs(bm.hitting_laplace(1.0, 0.0) - math.exp(-1.0)) < 1e-9

    values, hits = ss.simulate(m, n=2000, seed=1)
    assert len(values) == 2000 and hits == 0
    assert all(-1.0 <= v <= 1.0 for v in values)
    again, _ = ss.simulate(m, n=2000, seed=1)
    assert values == again

    report = ss.verify(bm, n=20000, seed=3)
    assert report["verdict"] == "pass", report
    assert report["martingale_class"] == "martingale"

    text = m.to_text()
    assert ss.DiffusionModel.from_text(text).to_text() == text

    fig = ss.figure_data("fig1")
    assert len(fig["x"]) == 801 and all(abs(v - 1.0) < 1e-12 for v in fig["W=2"])

    try:
        ss.synthesize(mu, 0.0, 0.5, 5.0)
    except ss.SpeedsynthError as e:
        assert e.code == "wronskian-out-of-range"
        assert isinstance(e, ValueError)
    else:
        raise AssertionError("expected SpeedsynthError")

    print("speedsynth smoke test: ok")


if __name__ == "__main__":
    main()
