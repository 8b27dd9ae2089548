"""Generate a small synthetic network, run every stage and print the report.

Run: python demos/end_to_end.py [workdir]
The same run from the shell:
    cellqos synth --workdir run --cities 4 --sites 40 --test-cities 1
    cellqos pipeline --workdir run
"""

import json
import sys
import tempfile

from cellqos.evaluation import EvalReport
from cellqos.pipeline import resolve_config, run_pipeline, run_synth


def main(workdir: str) -> None:
    cfg = resolve_config(overrides={"workdir": workdir, "synth_cities": 4, "synth_sites": 40,
                                    "synth_test_cities": 1, "n_estimators": 150})
    run_synth(cfg)
    summary = run_pipeline(cfg)
    print(json.dumps(summary["evaluate"], indent=2, sort_keys=True))
    rep = EvalReport.read(cfg.path("report"), cfg.theta)
    for row in rep.rows:
        print(f"{row.scope:<24}{row.instances:>6}{row.mape:>8.2f}{row.p_theta:>8.1f}")
    for note in rep.notes:
        print("note:", note)


if __name__ == "__main__":
    if len(sys.argv) > 1:
        main(sys.argv[1])
    else:
        with tempfile.TemporaryDirectory() as d:
            main(d)
