""" EstimateReport and its writers. Reports are plain records; every
writer sorts keys and keeps instance-id order so identical runs give
identical files. """

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np
import pandas as pd
import wandb
from omegaconf import OmegaConf

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["name", "instance", "lhs", "rhs", "slack", "pass"]

CSV_SCHEMA = {
    "name": "estimate evaluated (theorem1, haarala, nu_excess, gronwall, ...)",
    "instance": "instance id, unique within one run",
    "lhs": "left side of the inequality, oriented so that lhs >= rhs is the claim",
    "rhs": "right side of the inequality",
    "slack": "lhs - rhs",
    "pass": "true iff slack >= -tol and the instance was not rejected",
}


def to_json_safe(value):
    """ JSON-safe copy: numpy scalars unwrapped, non-finite floats -> None """
    if isinstance(value, dict):
        return {str(k): to_json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_json_safe(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


@dataclass
class EstimateReport:
    """ One evaluated inequality lhs >= rhs. status is "pass", "fail"
    or "rejected" (a precondition of the estimate did not hold). """

    name: str
    instance_id: str
    lhs: float
    rhs: float
    tol: float = 1e-6
    constants: Dict[str, Any] = field(default_factory=dict)
    instance: Dict[str, Any] = field(default_factory=dict)
    message: str = ""
    rejected: bool = False

    @property
    def slack(self):
        return self.lhs - self.rhs

    @property
    def status(self):
        if self.rejected:
            return "rejected"
        if not math.isfinite(self.slack):
            return "fail"
        return "pass" if self.slack >= -self.tol else "fail"

    @property
    def passed(self):
        return self.status == "pass"

    @staticmethod
    def reject(name, instance_id, message, instance=None):
        logger.warning("%s[%s] rejected: %s", name, instance_id, message)
        return EstimateReport(name=name, instance_id=str(instance_id), lhs=math.nan, rhs=math.nan,
                              instance=instance or {}, message=message, rejected=True)

    def asdict(self):
        return to_json_safe({
            "name": self.name, "instance": self.instance_id,
            "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack, "tol": self.tol,
            "status": self.status, "pass": self.passed, "message": self.message,
            "constants": self.constants, "descriptor": self.instance,
        })

    def summary_line(self):
        return (f"{self.name:<12} {self.instance_id:<24} {self.status:<8} "
                f"lhs={self.lhs:.6g} rhs={self.rhs:.6g} slack={self.slack:.3g}")

    def __repr__(self):
        return f"EstimateReport({self.summary_line()})"


def write_jsonl(reports: List[EstimateReport], path):
    with open(path, "w") as f:
        for report in reports:
            f.write(json.dumps(report.asdict(), sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def reports_frame(reports: List[EstimateReport]):
    rows = [{"name": r.name, "instance": r.instance_id, "lhs": r.lhs, "rhs": r.rhs,
             "slack": r.slack, "pass": r.passed} for r in reports]
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def write_csv(reports: List[EstimateReport], path):
    reports_frame(reports).to_csv(path, index=False, float_format="%.17g")


def write_schema(path, columns=None):
    with open(path, "w") as f:
        json.dump(columns or CSV_SCHEMA, f, indent=2, sort_keys=True)
        f.write("\n")


def write_reports(reports: List[EstimateReport], out_dir, stem="reports"):
    """ <stem>.jsonl, <stem>.csv and schema.json under out_dir """
    os.makedirs(out_dir, exist_ok=True)
    write_jsonl(reports, os.path.join(out_dir, f"{stem}.jsonl"))
    write_csv(reports, os.path.join(out_dir, f"{stem}.csv"))
    write_schema(os.path.join(out_dir, "schema.json"))


def exit_code(reports: List[EstimateReport]):
    """ 0 when nothing failed, 1 otherwise. Rejections do not fail a run. """
    return 1 if any(r.status == "fail" for r in reports) else 0


def init_wandb(name, config):
    """ One run per lab invocation, config attached """
    return wandb.init(project="born-infeld-lab", name=name, config=OmegaConf.to_object(config))


def log_to_wandb(reports: List[EstimateReport]):
    for report in reports:
        wandb.log({f"{report.name}/slack": to_json_safe(report.slack),
                   f"{report.name}/pass": int(report.passed)})
