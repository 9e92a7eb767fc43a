"""Saddle-node diagnostics for the fold, pitchfork and transcritical normal forms."""
import math

from sncert.dynamics import continue_branch, saddle_node_test
from sncert.synthetic import NORMAL_FORM_LAMBDA0, fold_normal_form, pitchfork_normal_form, transcritical_normal_form

BOX = ((-3.0, 3.0),)


def main():
    r = math.sqrt(NORMAL_FORM_LAMBDA0)
    cases = [
        ("fold", fold_normal_form, [(r, 0.0), (-r, 0.0)]),
        ("pitchfork", pitchfork_normal_form, [(r, 0.0), (-r, 0.0)]),
        ("transcritical", transcritical_normal_form, [(0.0, 0.0), (NORMAL_FORM_LAMBDA0, 0.0)]),
    ]
    print(f"{'family':<14} {'passed':<7} {'exponent':>9} {'curvature':>10}  census")
    for name, field, seeds in cases:
        branches = [continue_branch(field, (0.0, 1.0), [x], lam, BOX) for x, lam in seeds]
        d = saddle_node_test(field, branches, NORMAL_FORM_LAMBDA0)
        print(f"{name:<14} {str(d.passed):<7} {d.exponent:9.4f} {d.curvature:10.4g}  {d.census}")
        for f in d.failures:
            print(f"    {f}")


if __name__ == "__main__":
    main()
