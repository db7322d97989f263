from replen.bench.steps import STEPS as STEPS
from replen.bench.steps import EntryState as EntryState
from replen.bench.steps import ExpectStep as ExpectStep
from replen.bench.steps import Step as Step
from replen.bench.steps import build_step as build_step
from replen.bench.storage import Storage as Storage
from replen.bench.suite import BenchResult as BenchResult
from replen.bench.suite import BenchRunner as BenchRunner
from replen.bench.suite import Suite as Suite
from replen.bench.suite import load_suite as load_suite
from replen.bench.suite import parse_suite as parse_suite
from replen.bench.suite import run_bench as run_bench
