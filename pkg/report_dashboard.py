"""
db-LaCAM Bench Dashboard - static viewer over a bench output directory
Shows failure rate, runtime and cost per environment and the trajectories of a chosen solution.

    streamlit run report_dashboard.py -- bench_out
"""

import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
import plotly.express as px
import streamlit as st

import component_timer
import bench_runner
from bench_runner import RunReport
from export_utils import BenchExporter
from scenarios import load_scenario, load_solution

logger = logging.getLogger(__name__)

DEFAULT_BENCH_DIR = bench_runner.DEFAULT_OUT_DIR

CSS = """
<style>
    .main { padding-top: 1rem; }
    .success-box {
        background: #d4edda;
        border: 1px solid #c3e6cb;
        color: #155724;
        padding: 12px;
        border-radius: 6px;
        margin: 10px 0;
    }
    .error-box {
        background: #f8d7da;
        border: 1px solid #f5c6cb;
        color: #721c24;
        padding: 12px;
        border-radius: 6px;
        margin: 10px 0;
    }
</style>
"""


def load_report(bench_dir) -> Optional[Dict[str, object]]:
    """Report, grouped tables and component breakdown of a bench directory; None when it has no results"""
    bench_dir = Path(bench_dir)
    if not (bench_dir / "results.csv").exists():
        return None
    report = RunReport.from_directory(bench_dir)
    rows = report.rows()
    tables = BenchExporter(bench_dir / "report").scenario_tables(report)
    categories = [c for c in component_timer.CATEGORIES if c in rows.columns]
    if rows.empty:
        components = pd.DataFrame(columns=["scenario", "component", "seconds"])
    else:
        components = (rows.groupby("scenario")[categories].mean().reset_index()
                      .melt(id_vars="scenario", var_name="component", value_name="seconds"))
    return {"report": report, "rows": rows, "tables": tables, "components": components}


def solved_cells(report: RunReport) -> List[str]:
    rows = report.results
    if rows.empty:
        return []
    solved = rows[rows["success"].astype(bool) & rows["solution_file"].notna()]
    return sorted(solved["solution_file"].astype(str))


def show_overview(data: Dict[str, object]):
    rows = data["rows"]
    success = rows["success"].astype(bool)
    col1, col2, col3 = st.columns(3)
    with col1:
        st.metric("Cells", len(rows))
    with col2:
        st.metric("Solved", f"{int(success.sum())} ({100.0 * success.mean():.0f}%)" if len(rows) else "0")
    with col3:
        median_runtime = rows["runtime"].median() if len(rows) else float("nan")
        st.metric("Median runtime", f"{median_runtime:.2f}s")


def show_charts(data: Dict[str, object]):
    tables = data["tables"]
    st.header("📊 Per environment")

    fig_fail = px.bar(tables["failure_rate"], x="scenario", y="failure_rate", color="planner", barmode="group",
                      title="Failure rate", range_y=[0, 1])
    st.plotly_chart(fig_fail, use_container_width=True)

    fig_runtime = px.box(data["rows"], x="scenario", y="runtime", color="planner", points="all",
                         title="Runtime (s)")
    st.plotly_chart(fig_runtime, use_container_width=True)

    fig_cost = px.bar(tables["cost"], x="scenario", y="normalized_cost_mean", color="planner", barmode="group",
                      title="Normalized cost (1.0 = best solution found for the scenario)")
    st.plotly_chart(fig_cost, use_container_width=True)

    if not data["components"].empty:
        fig_parts = px.bar(data["components"], x="scenario", y="seconds", color="component",
                           title="Mean time per component (s)")
        st.plotly_chart(fig_parts, use_container_width=True)

    with st.expander("Tables", expanded=False):
        for name, table in tables.items():
            st.subheader(name)
            st.dataframe(table, use_container_width=True)


def show_solution(report: RunReport, solution_file: str):
    row = report.results[report.results["solution_file"] == solution_file].iloc[0]
    try:
        scenario = load_scenario(row["scenario_file"], check=False)
        solution = load_solution(Path(report.out_dir) / solution_file)
    except Exception as e:
        st.error(f"Error loading {solution_file}: {e}")
        return
    figure = BenchExporter(Path(report.out_dir) / "report").trajectory_figure(scenario, solution)
    st.plotly_chart(figure, use_container_width=True)
    st.write(f"**Cost**: {solution.cost:.2f}s, **expansions**: {row['expansions']}, **nodes**: {row['nodes']}")


def main():
    st.set_page_config(
        page_title="db-LaCAM Bench",
        page_icon="🤖",
        layout="wide",
        initial_sidebar_state="expanded"
    )
    st.markdown(CSS, unsafe_allow_html=True)
    st.title("🤖 db-LaCAM bench results")

    with st.sidebar:
        st.header("🔧 Source")
        default_dir = sys.argv[1] if len(sys.argv) > 1 else DEFAULT_BENCH_DIR
        bench_dir = st.text_input("Bench output directory", default_dir)

    data = load_report(bench_dir)
    if data is None:
        st.markdown(f'<div class="error-box">❌ No results.csv in {bench_dir}</div>', unsafe_allow_html=True)
        return
    if data["report"].empty:
        st.markdown('<div class="error-box">❌ The bench run has no rows yet</div>', unsafe_allow_html=True)
        return

    st.markdown(f'<div class="success-box">✅ Loaded {len(data["rows"])} cells from {bench_dir}</div>',
                unsafe_allow_html=True)
    show_overview(data)
    show_charts(data)

    cells = solved_cells(data["report"])
    st.header("🗺️ Trajectories")
    if not cells:
        st.warning("No solved cells to show")
        return
    selected = st.selectbox("Solution", cells)
    show_solution(data["report"], selected)


if __name__ == "__main__":
    main()
