"""Regenerate the sign-Hurst calibration table shipped with the package.

The table maps a target Hurst exponent for ±1 signs to the fGn Hurst
exponent that, after thresholding, yields it under the default estimator.
It is computed from exact sign variances, so the output is deterministic.
"""
import sys

from aggimpact.synth import build_calibration_table, calibration_path, write_calibration_table


def main() -> int:
    path = sys.argv[1] if len(sys.argv) > 1 else calibration_path()
    write_calibration_table(path, build_calibration_table())
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
