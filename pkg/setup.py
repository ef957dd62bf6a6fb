#!/usr/bin/env python3
"""
Developer setup for the query-focused summarization toolkit

Creates a virtual environment, installs requirements.txt into it, writes .env
from .env.example and prepares the log and run directories.
"""

import os
import sys
import shutil
import argparse
import subprocess
from pathlib import Path

MIN_PYTHON = (3, 9)
WORK_DIRS = ("logs", "runs")


def venv_executable(venv: Path, name: str) -> Path:
    scripts = venv / ("Scripts" if os.name == 'nt' else "bin")
    return scripts / (f"{name}.exe" if os.name == 'nt' else name)


def check_python_version(_venv: Path) -> bool:
    found = sys.version.split()[0]
    if sys.version_info < MIN_PYTHON:
        print(f"Python {'.'.join(map(str, MIN_PYTHON))}+ is required, found {found}")
        return False
    print(f"Python {found}")
    return True


def create_virtual_environment(venv: Path) -> bool:
    if venv_executable(venv, "python").exists():
        print(f"Reusing {venv}/")
        return True
    try:
        subprocess.run([sys.executable, "-m", "venv", str(venv)], check=True)
    except subprocess.CalledProcessError as e:
        print(f"venv creation failed: {e}")
        return False
    print(f"Created {venv}/")
    return True


def install_dependencies(venv: Path) -> bool:
    """pip install -r requirements.txt inside the environment"""
    python = venv_executable(venv, "python")
    try:
        subprocess.run([str(python), "-m", "pip", "install", "-r", "requirements.txt"], check=True)
    except (OSError, subprocess.CalledProcessError) as e:
        print(f"Dependency install failed: {e}")
        return False
    return True


def check_torch(venv: Path) -> bool:
    # import check runs inside the environment
    python = venv_executable(venv, "python")
    snippet = "import torch, numpy, scipy; print(torch.__version__, numpy.__version__, scipy.__version__)"
    result = subprocess.run([str(python), "-c", snippet], capture_output=True, text=True)
    if result.returncode != 0:
        print(f"Numeric stack not importable:\n{result.stderr.strip()}")
        return False
    print(f"torch / numpy / scipy: {result.stdout.strip()}")
    return True


def setup_environment_file(_venv: Path) -> bool:
    target, template = Path(".env"), Path(".env.example")
    if target.exists():
        print("Keeping existing .env")
        return True
    if not template.exists():
        print(".env.example is missing")
        return False
    try:
        shutil.copy(template, target)
    except OSError as e:
        print(f"Could not write .env: {e}")
        return False
    print("Wrote .env (edit LOG_DIR, RUNS_DIR, QFAS_SEED, QFAS_JOBS as needed)")
    return True


def create_directories(_venv: Path) -> bool:
    for name in WORK_DIRS:
        try:
            Path(name).mkdir(parents=True, exist_ok=True)
        except OSError as e:
            print(f"Could not create {name}/: {e}")
            return False
    print(f"Ready: {', '.join(d + '/' for d in WORK_DIRS)}")
    return True


def print_next_steps(venv: Path) -> None:
    activate = f"{venv}\\Scripts\\activate" if os.name == 'nt' else f"source {venv}/bin/activate"
    print("\nDone. Next:")
    print(f"  {activate}")
    print("  python main.py pipeline --kind sft --output runs/sft-demo   # synthetic end-to-end run")
    print("  pytest                                                      # fast test suite")
    print("  pytest -m slow                                              # directional checks")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--venv", default="venv", help="virtual environment directory")
    parser.add_argument("--no-install", action="store_true", help="skip pip install and the import check")
    args = parser.parse_args(argv)
    venv = Path(args.venv)

    steps = [("Python version", check_python_version), ("Virtual environment", create_virtual_environment)]
    if not args.no_install:
        steps += [("Dependencies", install_dependencies), ("Numeric stack", check_torch)]
    steps += [("Environment file", setup_environment_file), ("Work directories", create_directories)]

    for label, step in steps:
        print(f"\n[{label}]")
        if not step(venv):
            print(f"Setup stopped at: {label}")
            return 1

    print_next_steps(venv)
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nInterrupted")
        sys.exit(1)
