"""Smoke test for the ispec_py extension module.

Build and install first, e.g.

    pip install maturin
    maturin develop -m crates/python/Cargo.toml --release

then run `python python/smoke_test.py`.
"""

import cmath
import json
import math
import sys
import tempfile

import ispec_py

# Root of s*cot(s) + t*coth(t) with s = sqrt(λ + 30), t = sqrt(λ - 30).
P2_ROOT = 12.738291659043892j


def step_dtn(lam, c=30.0):
    s, t = cmath.sqrt(lam + c), cmath.sqrt(lam - c)
    return s * cmath.cos(s) / cmath.sin(s) + t * cmath.cosh(t) / cmath.sinh(t)


def main():
    print("ispec_py", ispec_py.__version__)

    eigs, residuals, classes, pair_ids = ispec_py.spectrum("P1(h=0.01)")
    assert all(c == "real" for c in classes), "positive problem must have a real spectrum"
    assert min(abs(z) for z in eigs) > 0.1
    print(f"P1: {len(eigs)} eigenvalues, all real, max residual {max(residuals):.1e}")

    assert ispec_py.negative_inertia("P2(c=30)") == 3

    eigs, _, classes, _ = ispec_py.spectrum("P2(c=30, h=0.001)")
    nonreal = [z for z, c in zip(eigs, classes) if c == "nonreal"]
    assert len(nonreal) == 2 and abs(nonreal[0] - nonreal[1].conjugate()) < 1e-8 * abs(nonreal[0])

    scan = ispec_py.nonreal_eigenvalues("P2(c=30)", seed=7)
    assert len(scan) == 2
    upper = max(scan, key=lambda z: z.imag)
    assert abs(upper - P2_ROOT) < 1e-4, upper
    print(f"P2(c=30): contour eigenvalue {upper:.8f}, oracle {P2_ROOT}")

    lam = 1 + 1j
    m = ispec_py.dtn_matrix("P2(c=30, h=0.00025)", lam)
    assert len(m) == 1 and abs(m[0][0] - step_dtn(lam)) < 1e-4 * abs(step_dtn(lam))

    rep = json.loads(ispec_py.enclosure("P2(c=30, h=0.01)"))
    assert rep["contained"] and math.isfinite(rep["rho_star"])
    print(f"enclosure radius {rep['rho_star']:.1f}, nu_sim {rep['nu_sim']:.3f}")

    with tempfile.TemporaryDirectory() as out:
        report = json.loads(ispec_py.run("P1", "verify", seed=1, out=out))
        assert all(c["passed"] for c in report["checks"])

    for bad, exc in [("P9", ValueError), ("P2(q=1)", ValueError)]:
        try:
            ispec_py.spectrum(bad)
        except exc:
            pass
        else:
            raise AssertionError(f"{bad} should raise {exc.__name__}")
    try:
        ispec_py.run("P1", "nonsense")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown command should raise ValueError")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
