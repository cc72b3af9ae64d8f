"""Parameter sweeps (node counts x protocols x seeds), CSV output and comparison."""

from __future__ import annotations

import csv
import io
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .config import PROTOCOLS, ScenarioConfig, emit_scenario
from .simulation import run_single
from .traffic import MetricsReport

CSV_VERSION = "manetsim-csv v1"
COLUMNS = (
    "nodes", "protocol", "seed", "dropped", "consumed_power_J", "throughput_pkt_per_ms",
    "mac_load", "ctrl_overhead", "rreq_tx", "rrep_tx", "rerr_tx", "hello_tx", "ctrl_rx",
    "generated", "delivered", "drop_queue", "drop_collision", "drop_noroute", "drop_buffer",
    "dead_nodes",
)
METRICS = COLUMNS[3:]
MEAN = "mean"
DEFAULT_NODE_COUNTS = (10, 20, 30, 40, 50)
NA = "NA"


class CompareError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    node_counts: tuple[int, ...] = DEFAULT_NODE_COUNTS
    protocols: tuple[str, ...] = PROTOCOLS
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    base: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self):
        for name in ("node_counts", "protocols", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ValueError(f"sweep {name} must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("sweep seeds must be distinct")
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ValueError(f"unknown protocol {p!r}")
        for n in self.node_counts:
            if n < 2:
                raise ValueError("node counts must be >= 2")

    def cells(self) -> list[tuple[int, str, int]]:
        return [(n, p, s) for n in self.node_counts for p in self.protocols for s in self.seeds]

    def config_for(self, nodes: int, protocol: str, seed: int) -> ScenarioConfig:
        return self.base.with_(sim__node_count=nodes, sim__protocol=protocol, sim__seed=seed)


def report_row(report: MetricsReport) -> dict[str, object]:
    """Metric columns of one run, keyed by CSV column name."""
    return {
        "dropped": report.dropped_packets,
        "consumed_power_J": report.consumed_power,
        "throughput_pkt_per_ms": report.throughput,
        "mac_load": report.mac_load,
        "ctrl_overhead": report.control_overhead,
        "rreq_tx": report.rreq_tx,
        "rrep_tx": report.rrep_tx,
        "rerr_tx": report.rerr_tx,
        "hello_tx": report.hello_tx,
        "ctrl_rx": report.ctrl_rx,
        "generated": report.generated,
        "delivered": report.delivered,
        "drop_queue": report.drop_queue,
        "drop_collision": report.drop_collision,
        "drop_noroute": report.drop_noroute,
        "drop_buffer": report.drop_buffer,
        "dead_nodes": report.dead_nodes,
    }


def _fmt(v) -> str:
    if v is None:
        return NA
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_cell(config: ScenarioConfig) -> MetricsReport:
    return run_single(config).report


@dataclass
class SweepResult:
    spec: SweepSpec
    reports: dict[tuple[int, str, int], MetricsReport]

    def rows(self, means: bool = True) -> list[dict[str, object]]:
        out = []
        for n in self.spec.node_counts:
            for p in self.spec.protocols:
                cell = []
                for s in self.spec.seeds:
                    row = {"nodes": n, "protocol": p, "seed": s}
                    row.update(report_row(self.reports[n, p, s]))
                    out.append(row)
                    cell.append(row)
                if means:
                    out.append({"nodes": n, "protocol": p, "seed": MEAN, **_aggregate(cell, _mean)})
        return out

    def stddev_rows(self) -> list[dict[str, object]]:
        out = []
        for n in self.spec.node_counts:
            for p in self.spec.protocols:
                cell = [dict(report_row(self.reports[n, p, s])) for s in self.spec.seeds]
                out.append({"nodes": n, "protocol": p, "seed": "stddev", **_aggregate(cell, _stdev)})
        return out

    def to_csv(self, means: bool = True) -> str:
        return _write(self.spec, self.rows(means))

    def stddev_csv(self) -> str:
        return _write(self.spec, self.stddev_rows())


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


def _stdev(values: list[float]) -> float:
    return statistics.stdev(values) if len(values) > 1 else 0.0


def _aggregate(rows: list[dict], fn) -> dict[str, object]:
    agg = {}
    for m in METRICS:
        vals = [r[m] for r in rows]
        # an undefined MAC load in any seed leaves the aggregate undefined
        agg[m] = None if any(v is None for v in vals) else fn([float(v) for v in vals])
    return agg


def _write(spec: SweepSpec, rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION}\n")
    buf.write(f"# sweep nodes={','.join(map(str, spec.node_counts))} "
              f"protocols={','.join(spec.protocols)} seeds={','.join(map(str, spec.seeds))}\n")
    for line in emit_scenario(spec.base).splitlines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in COLUMNS])
    return buf.getvalue()


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Run every cell; output order is fixed by ``spec`` whatever ``jobs`` is."""
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    cells = spec.cells()
    configs = [spec.config_for(*c) for c in cells]
    if jobs == 1:
        reports = [_run_cell(c) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_cell, configs))
    return SweepResult(spec, dict(zip(cells, reports)))


def read_csv(text: str) -> list[dict[str, str]]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {CSV_VERSION}":
        raise CompareError(f"not a {CSV_VERSION} file")
    body = [ln for ln in lines if not ln.startswith("#")]
    reader = csv.DictReader(body)
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise CompareError("CSV columns do not match the expected schema")
    return list(reader)


@dataclass(frozen=True)
class Delta:
    nodes: int
    metric: str
    baseline: Optional[float]
    variant: Optional[float]

    @property
    def percent(self) -> Optional[float]:
        b, v = self.baseline, self.variant
        if b is None or v is None:
            return None
        if b == 0:
            return 0.0 if v == 0 else None
        return (v - b) / b * 100.0


def compare(text: str, baseline: str, variant: str) -> list[Delta]:
    """Percent change of ``variant`` over ``baseline`` per node count, on seed-paired means."""
    cells: dict[tuple[int, str], dict[str, dict[str, str]]] = {}
    for row in read_csv(text):
        if row["seed"] in (MEAN, "stddev"):
            continue
        cells.setdefault((int(row["nodes"]), row["protocol"]), {})[row["seed"]] = row
    nodes = sorted({n for n, _ in cells})
    if not nodes:
        raise CompareError("no detail rows")
    out = []
    for n in nodes:
        b = cells.get((n, baseline))
        v = cells.get((n, variant))
        if b is None or v is None:
            raise CompareError(f"{n} nodes: missing {baseline if b is None else variant} rows")
        if set(b) != set(v):
            raise CompareError(f"{n} nodes: seeds differ between {baseline} and {variant}")
        seeds = sorted(b, key=int)
        for m in METRICS:
            out.append(Delta(n, m, _cell_mean(b, seeds, m), _cell_mean(v, seeds, m)))
    return out


def _cell_mean(rows: dict[str, dict[str, str]], seeds: Sequence[str], metric: str) -> Optional[float]:
    vals = [rows[s][metric] for s in seeds]
    if NA in vals:
        return None
    return _mean([float(x) for x in vals])


def format_deltas(deltas: list[Delta], baseline: str, variant: str) -> str:
    lines = [f"{variant} vs {baseline} (percent change of seed-paired means)"]
    lines.append(f"{'nodes':>5}  {'metric':<22}{'baseline':>14}{'variant':>14}{'change':>10}")
    for d in deltas:
        pct = "NA" if d.percent is None else f"{d.percent:+.1f}%"
        b = NA if d.baseline is None else f"{d.baseline:.6g}"
        v = NA if d.variant is None else f"{d.variant:.6g}"
        lines.append(f"{d.nodes:>5}  {d.metric:<22}{b:>14}{v:>14}{pct:>10}")
    return "\n".join(lines) + "\n"
