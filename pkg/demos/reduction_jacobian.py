"""Compare the two routes to the path-measure Jacobian.

The direct route differentiates the log volume ratio; the geometric
route assembles the same number from curvature terms and the squared
second fundamental form of the orbits.  On the exponential-orbit
scenario both must equal 9 * slope^2 in closed form; on the flat
product both must vanish.

Run:  python3 demos/reduction_jacobian.py
"""

from bundlecurv.fields import DEFAULT_ENGINE
from bundlecurv.jacobian import (
    j_norm_squared,
    jacobian_direct,
    jacobian_geometric,
    second_fundamental_form,
)
from bundlecurv.scenarios import build_scenario, sample_points


def show(name, **params):
    scenario = build_scenario(name, params or None)
    point = sample_points(scenario, 1)[0]
    direct = jacobian_direct(scenario.adapted, point, DEFAULT_ENGINE)
    geometric = jacobian_geometric(scenario.adapted, point, DEFAULT_ENGINE)
    norm2 = j_norm_squared(scenario.adapted, point, DEFAULT_ENGINE)
    form = second_fundamental_form(scenario.adapted, point, DEFAULT_ENGINE)
    print("%s%s" % (name, " %s" % params if params else ""))
    print("  J direct    : %+.10f" % direct)
    print("  J geometric : %+.10f" % geometric)
    print("  |j|^2       : %+.10f" % norm2)
    if form.raw is not None:
        print("  raw-vs-closed residual of j: %.3e"
              % abs(form.closed - form.raw).max())
    if "jacobian" in scenario.expected:
        print("  expected    : %+.10f" % scenario.expected["jacobian"])
    print()


def main():
    show("scaled_orbit")
    show("scaled_orbit", slope=0.5)
    show("flat_product")
    show("twisted_bundle")


if __name__ == "__main__":
    main()
