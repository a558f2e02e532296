import numpy as np

from arrayins.jacobian_check import (
    TOLERANCE,
    block_errors,
    validate_jacobians,
)
from arrayins.models import Variant, jacobian_noise, jacobian_state, state_blocks


def test_all_variants_pass():
    report = validate_jacobians(seed=0, n_states=3)
    assert report.passed, report.format()
    assert set(report.per_variant) == {"AccelArray2nd", "AccelArray1st", "Gyro2nd", "Gyro1st"}
    assert report.max_error < TOLERANCE
    text = report.format()
    assert "# seed=0" in text and text.endswith("PASS")


def _flipped_dv_dR(variant, *args, **kw):
    J = jacobian_state(variant, *args, **kw).copy()
    sb = state_blocks(variant)
    J[sb["v"], sb["R"]] *= -1
    return J


def test_sign_flip_is_detected_and_named():
    report = validate_jacobians(seed=1, n_states=2, state_fn=_flipped_dv_dR)
    assert not report.passed
    assert report.worst.row == "v" and report.worst.col == "R"
    assert report.worst.kind == "state"
    assert "dv/dR" in report.worst.name
    assert report.format().endswith("FAIL")


def test_noise_jacobian_error_is_detected():
    def scaled(variant, *args, **kw):
        return 1.001 * jacobian_noise(variant, *args, **kw)

    report = validate_jacobians(seed=2, n_states=2, noise_fn=scaled, variants=[Variant.GYRO_1ST])
    assert not report.passed
    assert report.worst.kind == "noise"


def test_block_errors_relative_scale():
    ref = np.array([[1.0, 0.0], [0.0, 1e-12]])
    a = ref.copy()
    a[1, 1] = 2e-12
    rows = {"a": slice(0, 1), "b": slice(1, 2)}
    errs = block_errors(a, ref, rows, rows)
    # tiny blocks are measured against a floor of 1e-8 of the full scale
    assert errs[("b", "b")] < 1e-3
    assert errs[("a", "a")] == 0.0
