"""Ablation suites: run tracker variants side by side on the standard
scenarios and compare failure counts.

Each suite toggles exactly one mechanism (pathway blend weight, part
lifecycle, net update gating) while everything else stays at the
scenario defaults, so a difference in failures is attributable to the
toggle.  Results aggregate over seeds: failures sum, accuracy averages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .benchmark import run_benchmark
from .errors import InvalidInputError
from .synth import scenario_config, standard_scenario, synth_sequence

STANDARD_SCENARIOS = ("A", "B", "C", "D")

# suite -> ordered (variant name, config overrides); the first variant is
# the reference the verdicts compare against
SUITES = {
    "pathways": (
        ("combined", {}),
        ("filter-only", {"alpha": 1.0}),
        ("net-only", {"alpha": 0.0}),
    ),
    "roles": (
        ("lifecycle", {}),
        ("one-role", {"roles": "single"}),
    ),
    "hcf": (
        ("hcf-update", {"update_policy": "hcf"}),
        ("no-update", {"update_policy": "none"}),
        ("full-update", {"update_policy": "full"}),
    ),
}


@dataclass
class AblationCell:
    variant: str
    scenario: str
    failures: int                 # summed over seeds
    accuracy: float               # mean over seeds
    per_seed: list = field(default_factory=list)  # (seed, failures, accuracy)


@dataclass
class AblationReport:
    suite: str
    scenarios: tuple
    seeds: tuple
    variants: tuple
    cells: dict                   # (variant, scenario) -> AblationCell
    verdicts: list

    def failures(self, variant: str, scenario: str | None = None) -> int:
        if scenario is not None:
            return self.cells[(variant, scenario)].failures
        return sum(self.cells[(variant, s)].failures for s in self.scenarios)

    def accuracy(self, variant: str, scenario: str) -> float:
        return self.cells[(variant, scenario)].accuracy

    def render(self) -> str:
        head = (f"suite {self.suite}  scenarios {','.join(self.scenarios)}  "
                f"seeds {','.join(str(s) for s in self.seeds)}")
        wide = max(len(v) for v in self.variants) + 2
        lines = [head, ""]
        cols = "".join(f"{s + ' fail/acc':>14}" for s in self.scenarios)
        lines.append(f"{'variant':<{wide}}{cols}{'total':>8}")
        for v in self.variants:
            row = f"{v:<{wide}}"
            for s in self.scenarios:
                c = self.cells[(v, s)]
                acc = "nan" if np.isnan(c.accuracy) else f"{c.accuracy:.3f}"
                row += f"{f'{c.failures} / {acc}':>14}"
            row += f"{self.failures(v):>8}"
            lines.append(row)
        lines.append("")
        for verdict in self.verdicts:
            lines.append(f"  {verdict}")
        return "\n".join(lines) + "\n"


def _compare(report: AblationReport, scenario: str, others) -> str:
    ref = report.variants[0]
    base = report.failures(ref, scenario)
    parts = [f"{v} {report.failures(v, scenario)}" for v in others]
    ok = all(base <= report.failures(v, scenario) for v in others)
    tag = "ok" if ok else "VIOLATED"
    return (f"{scenario}: {ref} failures {base} <= {', '.join(parts)}"
            f"  [{tag}]")


def _verdicts(report: AblationReport) -> list:
    others = list(report.variants[1:])
    if report.suite == "hcf":
        # the interesting comparison is gated vs every-frame updates;
        # no-update is context
        others = [v for v in others if v == "full-update"] or others
    return [_compare(report, s, others) for s in report.scenarios]


def run_ablation(suite: str, seeds, scenarios=STANDARD_SCENARIOS,
                 overrides: dict | None = None, progress=None) -> AblationReport:
    """Run every variant of `suite` on the given scenarios and seeds.

    `overrides` are extra config fields applied to every run (the variant
    keys win on conflict).  `progress` is an optional callable fed one
    line per completed run.
    """
    if suite not in SUITES:
        raise InvalidInputError(
            f"unknown ablation suite {suite!r}; valid: {', '.join(sorted(SUITES))}")
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise InvalidInputError("need at least one seed")
    scenarios = tuple(scenarios)
    variants = SUITES[suite]

    sequences = {}
    for s in scenarios:
        spec = standard_scenario(s)   # raises on unknown scenario
        for seed in seeds:
            sequences[(s, seed)] = synth_sequence(spec, seed=seed)

    cells = {}
    for vname, vover in variants:
        for s in scenarios:
            per_seed = []
            for seed in seeds:
                kw = dict(overrides or {})
                kw.update(vover)
                cfg = scenario_config(seed=seed, **kw)
                rep = run_benchmark(sequences[(s, seed)], cfg)
                per_seed.append((seed, rep.failures, rep.accuracy))
                if progress is not None:
                    progress(f"{vname} {s} seed {seed}: "
                             f"failures {rep.failures} accuracy {rep.accuracy:.3f} "
                             f"({rep.runtime_s:.1f}s)")
            accs = [a for _, _, a in per_seed if not np.isnan(a)]
            cells[(vname, s)] = AblationCell(
                variant=vname, scenario=s,
                failures=sum(f for _, f, _ in per_seed),
                accuracy=float(np.mean(accs)) if accs else float("nan"),
                per_seed=per_seed)

    report = AblationReport(
        suite=suite, scenarios=scenarios, seeds=seeds,
        variants=tuple(v for v, _ in variants), cells=cells, verdicts=[])
    report.verdicts = _verdicts(report)
    return report
