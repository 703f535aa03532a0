from ctda.harness.commands import cmd_generate, cmd_report, cmd_sweep_tau, cmd_train, cmd_verify
from ctda.harness.experiment import ExperimentConfig, OutputLayout
from ctda.harness.verify import run_checks
