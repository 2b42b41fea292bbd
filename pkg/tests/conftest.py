"""Shared fixtures and helpers for the test suite."""

import pytest
import torch

torch.set_num_threads(1)

#: one line per acceptance criterion, echoed after the test summary so they
#: are visible even when pytest captures stdout
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)
    yield


def tiny_run_config(tmp_path, *, epochs=2, n_per_split=48, batch_size=8,
                    cells=2, nodes=2, optimizer="sgd", seeds=(0,),
                    init_channels=4, resolution=32, eval_epochs=1,
                    quick_epochs=1, final_runs=1, stem="patch",
                    eval_channels=4, num_classes=3):
    """A RunConfig small enough for second-scale end-to-end tests."""
    from cellsearch.config import DataConfig, EvalBlock, RunConfig, SearchConfig

    return RunConfig(
        dataset=DataConfig(kind="synth", num_classes=num_classes,
                           label_mode="single_label", resolution=resolution,
                           n_per_split=n_per_split, background_uniformity=0.9),
        search=SearchConfig(epochs=epochs, batch_size=batch_size,
                            init_channels=init_channels, optimizer=optimizer,
                            cells=cells, nodes=nodes, stem=stem),
        eval=EvalBlock(epochs=eval_epochs, batch_size=16,
                       init_channels=eval_channels, quick_epochs=quick_epochs,
                       final_runs=final_runs, stem=stem),
        seeds=list(seeds),
        out_dir=str(tmp_path / "runs"),
    )
