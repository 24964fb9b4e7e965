"""Sweep every pair of bank behaviours and show who the regulator blames.

Each run files a regulator case whether or not anyone lost money, so the
table shows the verdict for honest banks too.

    python demos/fault_grid.py [ALT1_DESIGN1|ALT1_DESIGN2|ALT2]
"""

import sys

from hybridpay.sim import config, grid

alternative = sys.argv[1] if len(sys.argv) > 1 else "ALT1_DESIGN2"
base = config.library("alt1_design1_happy")
base["session"].update(alternative=alternative, collateral_payer=2, collateral_payee=3)

result = grid.enumerate_faults(base, {"dimensions": {"bank_a": grid.BEHAVIORS, "bank_i": grid.BEHAVIORS},
                                      "disputes_always": True})

width = max(map(len, grid.BEHAVIORS))
print(f"{alternative}: rows are bank_a, columns are bank_i; cell = outcome / blamed")
print(" " * width + "  " + "  ".join(f"{b[:18]:<26}" for b in grid.BEHAVIORS))
for a in grid.BEHAVIORS:
    row = [c for c in result.cells if c.cell["bank_a"] == a]
    cells = [f"{c.report['outcome'][:9]:<9} / {','.join(c.culprits) or '-':<14}" for c in row]
    print(f"{a:<{width}}  " + "  ".join(cells))

s = result.summary()
print(f"\n{s['cells']} runs, {s['violations']} invariant violations, {s['misclassified']} misclassified")
