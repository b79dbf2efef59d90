"""What is another megawatt of interconnection worth?

Sweeps the peak-load cap of the small bundled instance (with its base load
raised so the cap binds), and compares two marginal values at each point:
the forward finite difference of the worst-case profit, and the sum of the
hourly load-cap shadow prices from the LP with the binaries fixed at the
optimum. The two agree where the optimal integer plan does not change
across the step; where it does, only the finite difference is meaningful.

    python demos/interconnection_value.py
"""
from gridforge.analytics import fd_sensitivity
from gridforge.instances import load_instance


def main():
    spec = load_instance("demo_small", {"generator.base_load": [80, 84, 88, 90, 86, 82]})
    grid = [88, 90, 92, 94, 96, 98, 100]

    report = fd_sensitivity(spec, "load_cap", grid, delta=1.0)
    print(report.to_text())

    print("\nramp limit, with the peak cap fixed at 100 MW:")
    roomy = load_instance("demo_small", {"generator.base_load": [80, 84, 88, 90, 86, 82], "limits.load_cap": 100})
    ramp = fd_sensitivity(roomy, "ramp_cap", [4, 6, 8, 10, 20], delta=1.0)
    print(ramp.to_text())


if __name__ == "__main__":
    main()
