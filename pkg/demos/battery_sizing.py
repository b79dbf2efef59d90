"""How many battery units pay for themselves?

Runs the sizing study on the small bundled instance for two commercial
unit types. Each fleet size is solved without a terminal state-of-charge
requirement; the energy the day ends up borrowing from the battery is
valued at the mean energy price and taken back out of the value added.
Net value subtracts the daily capital charge.

    python demos/battery_sizing.py
"""
from gridforge.analytics import MEGAPACK_2XL, MEGAPACK_3, sizing_study, sizing_table
from gridforge.instances import load_instance


def main():
    spec = load_instance("demo_small")
    cells = sizing_study(spec, [MEGAPACK_3, MEGAPACK_2XL], units=[0, 1, 2, 4], cycle_limits=[0.5, 1.0],
                         rates=[0.07, 0.10], years=20)
    print(sizing_table(cells))

    best = max((c for c in cells if c.report is not None and c.units > 0), key=lambda c: c.report.net_value)
    if best.report.net_value < 0:
        print("\nno fleet size covers its capital charge on this day; the least negative is:")
    print(f"best net value: {best.technology} x{best.units}, {best.cycle_limit:g} cycles/day, "
          f"r={best.rate:g}: {best.report.net_value:,.2f} per day "
          f"(AS share {best.report.as_revenue:,.2f} of VA {best.report.value_added_corrected:,.2f})")


if __name__ == "__main__":
    main()
