"""
Bootstrap script for VistaNet.
Run this after cloning: creates data directories and a virtual environment,
installs requirements.txt and checks that the core packages import.
"""

import subprocess
import sys
from pathlib import Path

REQUIRED_IMPORTS = ["torch", "numpy", "scipy", "pandas", "PIL", "pydantic", "yaml", "tqdm", "dotenv"]


def print_step(step_num, message):
    print(f"\n{'=' * 60}")
    print(f"Step {step_num}: {message}")
    print(f"{'=' * 60}")


def check_python_version():
    version = sys.version_info
    print(f" Python version: {version.major}.{version.minor}.{version.micro}")
    if version < (3, 9):
        print(" ERROR: Python 3.9+ is required!")
        return False
    return True


def create_directories(project_root):
    for directory in (project_root / "data" / "synthetic", project_root / "data" / "runs"):
        directory.mkdir(parents=True, exist_ok=True)
        (directory / ".gitkeep").touch()
        print(f" Created directory: {directory}")
    return True


def check_config_files(project_root):
    missing = [p for p in ("settings.yaml", "layout.yaml") if not (project_root / "configs" / p).exists()]
    for name in missing:
        print(f" Missing configuration: configs/{name}")
    return not missing


def venv_python(project_root):
    venv_path = project_root / ".venv"
    if sys.platform == "win32":
        return venv_path / "Scripts" / "python.exe"
    return venv_path / "bin" / "python"


def create_virtual_environment(project_root):
    venv_path = project_root / ".venv"
    if venv_path.exists():
        print(f" Virtual environment already exists: {venv_path}")
        return True
    try:
        subprocess.run([sys.executable, "-m", "venv", str(venv_path)], check=True, capture_output=True)
        print(f" Created virtual environment: {venv_path}")
        return True
    except subprocess.CalledProcessError as e:
        print(f" Error creating virtual environment: {e}")
        return False


def install_dependencies(project_root):
    python_path = venv_python(project_root)
    requirements = project_root / "requirements.txt"
    if not python_path.exists() or not requirements.exists():
        print(" Virtual environment or requirements.txt not found")
        return False
    print(" Installing dependencies (torch can take a few minutes)...")
    try:
        subprocess.run(
            [str(python_path), "-m", "pip", "install", "-r", str(requirements)],
            check=True, capture_output=True, text=True,
        )
        return True
    except subprocess.CalledProcessError as e:
        print(f" Error installing dependencies: {e}")
        if e.stderr:
            print(f"Error: {e.stderr}")
        return False


def verify_installation(project_root):
    python_path = venv_python(project_root)
    all_installed = True
    for package in REQUIRED_IMPORTS:
        result = subprocess.run([str(python_path), "-c", f"import {package}"], capture_output=True)
        ok = result.returncode == 0
        all_installed &= ok
        print(f" {package} is {'installed' if ok else 'NOT installed'}")
    return all_installed


def print_next_steps():
    print("\n" + "=" * 60)
    print(" SETUP COMPLETE!")
    print("=" * 60)
    print("\n1. Generate a synthetic dataset:")
    print("     python scripts/vistanet.py synth --count 200 --out data/synthetic")
    print("2. Train the ensemble:")
    print("     python scripts/vistanet.py train --config configs/settings.yaml")
    print("3. Predict and evaluate:")
    print("     python scripts/vistanet.py predict --checkpoints data/runs/latest/checkpoints/*.ckpt \\")
    print("         --images data/synthetic/images/bleeding --out data/runs/latest/predict --boxes")
    print("\n See README.md for the full command reference")


def main():
    project_root = Path(__file__).parent
    print_step(1, "Checking Python Version")
    if not check_python_version():
        sys.exit(1)
    print_step(2, "Creating Directories")
    create_directories(project_root)
    print_step(3, "Checking Configuration Files")
    if not check_config_files(project_root):
        sys.exit(1)
    print_step(4, "Setting Up Virtual Environment")
    if not create_virtual_environment(project_root):
        print("   Run: python -m venv .venv")
    print_step(5, "Installing Dependencies")
    if install_dependencies(project_root):
        print_step(6, "Verifying Installation")
        verify_installation(project_root)
    else:
        print("   Please run manually: pip install -r requirements.txt")
    print_next_steps()


if __name__ == "__main__" and len(sys.argv) > 1:
    # Invoked by a build frontend (pip/setuptools): packaging metadata lives in pyproject.toml.
    from setuptools import setup

    setup()
elif __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        print("\n\n  Setup interrupted by user.")
        sys.exit(1)
