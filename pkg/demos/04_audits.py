"""
Audit suite over the canonical instances
========================================

Each instance is solved at h = 0.02 and h = 0.01. Inequalities with explicit
constants are checked directly; those with unknown constants get a fitted
constant that must not grow by more than 2x under refinement.
"""

from thinpen.audits import AuditKind, run_suite, summary_text
from thinpen.instances import CANONICAL

reports = run_suite(list(CANONICAL.values()), list(AuditKind))
print(summary_text(reports))

# The same run from the shell, writing audit_report.csv and audit_summary.txt:
#     thinpen verify --config verify.cfg --out out/verify
