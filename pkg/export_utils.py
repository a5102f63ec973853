"""
Export bench reports: grouped CSV tables, a text summary and SVG trajectory plots
"""

import logging
import math
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go

from bench_runner import RunReport
from geometry import Obstacle, ShapeKind
from scenarios import Scenario, Solution, load_scenario, load_solution

logger = logging.getLogger(__name__)

TABLE_COLUMNS = {
    "failure_rate": ["scenario", "planner", "runs", "successes", "failure_rate"],
    "runtime": ["scenario", "planner", "runs", "runtime_mean", "runtime_median", "runtime_max"],
    "cost": ["scenario", "planner", "solved", "cost_mean", "cost_median",
             "normalized_cost_mean", "normalized_cost_median"],
}


class BenchExporter:
    """Export bench results in tables, reports and figures"""

    def __init__(self, export_dir="exports"):
        self.export_dir = Path(export_dir)
        self.export_dir.mkdir(parents=True, exist_ok=True)

    def scenario_tables(self, report: RunReport) -> Dict[str, pd.DataFrame]:
        """Failure rate, runtime and cost per scenario and planner"""
        rows = report.rows()
        if rows.empty:
            return {name: pd.DataFrame(columns=columns) for name, columns in TABLE_COLUMNS.items()}

        rows = rows.assign(success=rows["success"].astype(bool))
        # normalised by the best cost any planner reached on the scenario
        best = rows[rows["success"]].groupby("scenario")["cost"].min()
        rows["normalized_cost"] = rows["cost"] / rows["scenario"].map(best)

        grouped = rows.groupby(["scenario", "planner"], sort=True)
        failure = grouped.agg(runs=("seed", "count"), successes=("success", "sum")).reset_index()
        failure["failure_rate"] = 1.0 - failure["successes"] / failure["runs"]

        runtime = grouped.agg(
            runs=("seed", "count"),
            runtime_mean=("runtime", "mean"),
            runtime_median=("runtime", "median"),
            runtime_max=("runtime", "max"),
        ).reset_index()

        cost = grouped.agg(
            solved=("success", "sum"),
            cost_mean=("cost", "mean"),
            cost_median=("cost", "median"),
            normalized_cost_mean=("normalized_cost", "mean"),
            normalized_cost_median=("normalized_cost", "median"),
        ).reset_index()

        return {
            "failure_rate": failure[TABLE_COLUMNS["failure_rate"]],
            "runtime": runtime[TABLE_COLUMNS["runtime"]],
            "cost": cost[TABLE_COLUMNS["cost"]],
        }

    def export_tables(self, report: RunReport) -> Dict[str, Path]:
        """One CSV per table; an empty report still gets the header line"""
        paths = {}
        for name, table in self.scenario_tables(report).items():
            path = self.export_dir / f"{name}.csv"
            table.to_csv(path, index=False)
            paths[name] = path
        logger.info(f"Exported {len(paths)} tables to {self.export_dir}")
        return paths

    def _add_obstacle(self, fig: go.Figure, obstacle: Obstacle):
        cx, cy = obstacle.center[0], obstacle.center[1]
        style = dict(line=dict(color="#444444", width=1), fillcolor="rgba(90, 90, 90, 0.45)")
        if obstacle.shape.kind == ShapeKind.SPHERE:
            r = obstacle.shape.radius
            fig.add_shape(type="circle", x0=cx - r, y0=cy - r, x1=cx + r, y1=cy + r, **style)
            return
        hx, hy = obstacle.shape.half_extents[0], obstacle.shape.half_extents[1]
        c, s = math.cos(obstacle.yaw), math.sin(obstacle.yaw)
        corners = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy), (-hx, -hy)]
        path = " ".join(
            f"{'M' if k == 0 else 'L'} {cx + c * x - s * y} {cy + s * x + c * y}" for k, (x, y) in enumerate(corners)
        )
        fig.add_shape(type="path", path=path + " Z", **style)

    def trajectory_figure(self, scenario: Scenario, solution: Solution, title: Optional[str] = None) -> go.Figure:
        """Top view of every robot's path over the obstacles; 3D workspaces are projected on xy"""
        fig = go.Figure()
        ws = scenario.workspace
        for obstacle in ws.obstacles:
            self._add_obstacle(fig, obstacle)

        palette = px.colors.qualitative.Plotly
        for i, (robot, traj) in enumerate(zip(scenario.robots, solution.trajectories)):
            color = palette[i % len(palette)]
            dims = list(robot.model.position_dims)[:2]
            xy = traj.states[:, dims]
            goal = robot.goal[dims]
            fig.add_trace(go.Scatter(x=xy[:, 0], y=xy[:, 1], mode="lines", line=dict(color=color, width=2),
                                     name=f"robot {i} ({robot.model.model_id.value})"))
            fig.add_trace(go.Scatter(x=[xy[0, 0]], y=[xy[0, 1]], mode="markers", showlegend=False,
                                     marker=dict(color=color, size=9, symbol="circle")))
            fig.add_trace(go.Scatter(x=[goal[0]], y=[goal[1]], mode="markers", showlegend=False,
                                     marker=dict(color=color, size=11, symbol="x")))

        fig.update_layout(
            title=title or f"{scenario.name} - cost {solution.cost:.2f}s",
            template="plotly_white",
            width=700,
            height=int(700 * (ws.upper[1] - ws.lower[1]) / max(ws.upper[0] - ws.lower[0], 1e-9)) + 80,
            margin=dict(l=40, r=20, t=50, b=40),
        )
        fig.update_xaxes(range=[ws.lower[0], ws.upper[0]], showgrid=False)
        fig.update_yaxes(range=[ws.lower[1], ws.upper[1]], scaleanchor="x", scaleratio=1, showgrid=False)
        return fig

    def export_trajectory_svg(self, scenario: Scenario, solution: Solution, filename=None) -> Optional[Path]:
        """SVG through plotly's static image export; None when the export fails"""
        if filename is None:
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            filename = self.export_dir / f"{scenario.name}_{timestamp}.svg"
        filename = Path(filename)
        filename.parent.mkdir(parents=True, exist_ok=True)
        try:
            self.trajectory_figure(scenario, solution).write_image(str(filename), format="svg")
        except Exception as e:
            logger.error(f"SVG export of {scenario.name} failed: {e}")
            return None
        return filename

    def export_solution_plots(self, report: RunReport) -> List[Path]:
        """One SVG per successful row that has a solution file"""
        rows = report.results
        if rows.empty or report.out_dir is None:
            return []
        plots = []
        for _, row in rows[rows["success"].astype(bool)].iterrows():
            if not isinstance(row["solution_file"], str):
                continue
            try:
                scenario = load_scenario(row["scenario_file"], check=False)
                solution = load_solution(Path(report.out_dir) / row["solution_file"])
            except Exception as e:
                logger.error(f"Cannot plot {row['solution_file']}: {e}")
                continue
            path = self.export_trajectory_svg(
                scenario, solution, self.export_dir / "plots" / f"{Path(row['solution_file']).stem}.svg"
            )
            if path is not None:
                plots.append(path)
        logger.info(f"Exported {len(plots)} trajectory plots")
        return plots

    def create_summary_report(self, report: RunReport) -> str:
        """Plain text summary of a bench run"""
        if report.empty:
            return "No bench results to summarize"

        rows = report.rows()
        success = rows["success"].astype(bool)
        solved_costs = rows.loc[success, "cost"].astype(float)
        runtimes = rows["runtime"].astype(float)
        statuses = rows["status"].value_counts().sort_index()

        summary = f"""
DB-LACAM BENCH SUMMARY REPORT
Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}
Results: {report.out_dir}
{'='*80}

OVERVIEW:
  Cells: {len(rows)}
  Scenarios: {', '.join(sorted(rows['scenario'].astype(str).unique()))}
  Planners: {', '.join(sorted(rows['planner'].astype(str).unique()))}
  Seeds: {', '.join(map(str, sorted(rows['seed'].unique())))}
  Solved: {int(success.sum())} ({100.0 * success.mean():.1f}%)
  Outcomes: {', '.join(f'{status}={count}' for status, count in statuses.items())}

RUNTIME:
  Mean: {np.mean(runtimes):.3f}s
  Median: {np.median(runtimes):.3f}s
  Max: {np.max(runtimes):.3f}s

COST (solved cells):
  Mean: {np.mean(solved_costs) if len(solved_costs) else float('nan'):.2f}s
  Median: {np.median(solved_costs) if len(solved_costs) else float('nan'):.2f}s

PER SCENARIO:
"""
        for _, row in report.summary().iterrows():
            summary += (f"  {row['scenario']} [{row['planner']}]: {int(row['successes'])}/{int(row['runs'])} solved, "
                        f"runtime median {row['runtime_median']:.3f}s, cost median {row['cost_median']:.2f}s\n")
        return summary

    def export_summary(self, report: RunReport, filename=None) -> Path:
        if filename is None:
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            filename = self.export_dir / f"bench_summary_{timestamp}.txt"
        with open(filename, "w", encoding="utf-8") as f:
            f.write(self.create_summary_report(report))
        return Path(filename)


# Convenience functions for easy import
def emit_plots(report: RunReport, export_dir=None) -> Dict[str, object]:
    """Tables plus one SVG per solved cell, under <bench dir>/report by default"""
    if export_dir is None:
        export_dir = Path(report.out_dir) / "report" if report.out_dir is not None else "exports"
    exporter = BenchExporter(export_dir)
    return {"tables": exporter.export_tables(report), "plots": exporter.export_solution_plots(report)}

def plot_solution(scenario: Scenario, solution: Solution, filename) -> Optional[Path]:
    exporter = BenchExporter(Path(filename).parent)
    return exporter.export_trajectory_svg(scenario, solution, filename)
