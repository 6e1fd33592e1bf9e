"""Average-action spectrum of the cosine map over several periods, written
as a CSV table and an SVG scatter plot in the working directory.
"""

from sympal import scan_periods, sys_c
from sympal.output import emit_plots

table = scan_periods(sys_c(), range(1, 7))
print(table.to_csv())
for p, fam in sorted(table.degenerate_family.items()):
    if fam:
        print(f"period {p}: degenerate family flagged")

with open("spectrum.csv", "w") as fh:
    fh.write(table.to_csv())
emit_plots(table, "spectrum.svg", reference=0.0, title="cosine map")
print("wrote spectrum.csv and spectrum.svg")
