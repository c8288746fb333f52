"""Smoke test for the pyreifenberg extension.

Uses an installed module when available; otherwise loads the library built by
`cargo build --release -p pyreifenberg --features extension-module`.
"""

import json
import math
import pathlib
import shutil
import sys
import tempfile


def load():
    try:
        import pyreifenberg
        return pyreifenberg
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parents[1]
    built = root / "target" / "release" / "libpyreifenberg.so"
    if not built.exists():
        sys.exit(f"pyreifenberg is not installed and {built} does not exist")
    staging = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(built, staging / "pyreifenberg.so")
    sys.path.insert(0, str(staging))
    import pyreifenberg
    return pyreifenberg


def main():
    rf = load()

    curve = rf.snowflake(0.05, 3, 5e-4)
    assert curve.ambient_dim == 2 and curve.intrinsic_dim == 1
    total = sum(curve.weights())
    assert abs(total - rf.snowflake_length(1.0, 0.05, 3)) < 1e-12, total
    x = curve.points()[len(curve) // 2]
    b = rf.beta_inf(curve, x, 0.1)
    assert 0.0 < b < 0.05, b
    assert rf.beta_q(curve, x, 0.1, 1.0) <= b + 1e-12

    line = rf.PointCloud.generate(json.dumps(
        {"kind": "flat", "ambient_dim": 2, "intrinsic_dim": 1, "lower": 0.0, "upper": 1.0, "spacing": 1e-3}))
    flat = rf.ParamMap.build(line, 3)
    assert flat.audit()["pass"]
    assert flat.image([0.4, 0.0]) == [0.4, 0.0]
    assert flat.extend([0.4, 0.03]) == [0.4, 0.03]

    pm = rf.ParamMap.build(curve, 3, rf.Plane.coordinate(2, 1), "l2", 0.1)
    report = pm.audit()
    assert report["pass"], report
    y = pm.image([0.5, 0.0])
    assert abs(y[0] - 0.5) < 1e-2 and abs(y[1]) < 2e-2, y
    jac = pm.dsigma(1, [0.5, 0.01])
    assert len(jac) == 2 and len(jac[0]) == 2
    back = rf.ParamMap.from_json(pm.to_json())
    assert back.image([0.3, 0.0]) == pm.image([0.3, 0.0])
    assert back.depth == pm.depth

    c, s = math.cos(0.3), math.sin(0.3)
    q = rf.project_isometry([[1.01 * c, -s], [s, 0.99 * c]])
    gram = [[sum(q[i][k] * q[j][k] for k in range(2)) for j in range(2)] for i in range(2)]
    assert all(abs(gram[i][j] - (i == j)) < 1e-12 for i in range(2) for j in range(2)), gram

    try:
        rf.PointCloud.generate('{"kind": "snowflake"')
    except rf.ReifenbergError as e:
        assert "schema error" in str(e)
    else:
        raise AssertionError("malformed spec accepted")

    print(f"pyreifenberg {rf.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
