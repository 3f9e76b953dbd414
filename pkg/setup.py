#!/usr/bin/env python3
"""
Developer bootstrap for the B-link tree index: dependencies, log
directory, .env, a smoke run of the command line and the test suite.
"""

import os
import sys
import subprocess
import shutil
import tempfile
from pathlib import Path

REQUIRED_PYTHON = (3, 10)
LOG_DIRECTORIES = ["outputs", "outputs/logs"]


def check_python_version():
    """Check if the Python version is compatible"""
    if sys.version_info < REQUIRED_PYTHON:
        print(f"❌ Python {'.'.join(map(str, REQUIRED_PYTHON))} or higher is required, found {sys.version.split()[0]}")
        return False
    print(f"✅ Python {sys.version.split()[0]}")
    return True


def install_dependencies():
    print("📦 Installing requirements.txt...")
    try:
        subprocess.check_call([sys.executable, "-m", "pip", "install", "-q", "-r", "requirements.txt"])
    except subprocess.CalledProcessError as e:
        print(f"❌ pip failed with status {e.returncode}")
        return False
    print("✅ Dependencies installed")
    return True


def create_log_directories():
    for directory in LOG_DIRECTORIES:
        os.makedirs(directory, exist_ok=True)
    print(f"📁 Log directory ready: {LOG_DIRECTORIES[-1]}")
    return True


def setup_environment():
    """Seed .env from env.example once; an existing .env is left alone"""
    env_file, template = Path(".env"), Path("env.example")
    if env_file.exists():
        print("⚙️  .env already present")
    elif template.exists():
        shutil.copy(template, env_file)
        print("⚙️  .env created from env.example")
    else:
        print("⚠️  env.example missing, running on built-in defaults")
    return True


def smoke_test():
    """Create a small tree in a scratch directory, write, read back and audit it"""
    from main import run

    with tempfile.TemporaryDirectory() as scratch:
        path = os.path.join(scratch, "smoke.db")
        steps = [
            ["create", "--file", path, "--page-bits", "9"],
            ["put", "--file", path, "smoke", "1"],
            ["get", "--file", path, "smoke"],
            ["audit", "--file", path],
        ]
        for argv in steps:
            status = run(argv)
            if status != 0:
                print(f"❌ Smoke step '{argv[0]}' exited with {status}")
                return False
    print("✅ Smoke run: create, put, get, audit")
    return True


def run_tests():
    print("🧪 Running pytest...")
    try:
        status = subprocess.call([sys.executable, "-m", "pytest", "tests/", "-q"])
    except FileNotFoundError:
        print("⚠️  pytest not found, skipping tests")
        return True
    print("✅ Tests passed" if status == 0 else f"⚠️  pytest exited with {status}, setup continues")
    return True


def main():
    print("🚀 B-LINK TREE INDEX - SETUP")
    print("=" * 50)

    for step in (check_python_version, install_dependencies, create_log_directories,
                 setup_environment, smoke_test):
        if not step():
            sys.exit(1)
    run_tests()

    print("\n🎉 Setup finished")
    print("=" * 50)
    print("Try:")
    print("  python main.py create --file tree.db")
    print("  python main.py load --file tree.db keys.tsv")
    print("  python main.py stress --file stress.db --workers 8")
    print("  python main.py audit --file tree.db")
    print("=" * 50)


if __name__ == '__main__':
    main()
