import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent

# pandas >= 1.5 for to_csv(lineterminator=...)
MINIMUM_VERSIONS = {'numpy': (1, 22), 'scipy': (1, 9), 'pandas': (1, 5)}


def run_command(command, description):
    """Run a shell command; prints the outcome and returns success"""
    print(f"\n🔧 {description}...")
    try:
        subprocess.run(command, shell=True, check=True, capture_output=True, text=True, cwd=ROOT)
        print(f"✅ {description} completed successfully")
        return True
    except subprocess.CalledProcessError as e:
        print(f"❌ {description} failed: {e}")
        print(f"Error output: {e.stderr}")
        return False


def read_pins(path=ROOT / 'minimal_requirements.txt'):
    return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def check_versions():
    """Import the stack and compare against MINIMUM_VERSIONS"""
    import importlib

    ok = True
    for name, minimum in MINIMUM_VERSIONS.items():
        module = importlib.import_module(name)
        found = tuple(int(part) for part in module.__version__.split('.')[:2])
        marker = "✅" if found >= minimum else "❌"
        ok = ok and found >= minimum
        print(f"{marker} {name} {module.__version__} (needs >= {'.'.join(map(str, minimum))})")
    return ok


def smoke_test():
    """Solve one small problem end to end"""
    sys.path.append(str(ROOT))
    sys.path.append(str(ROOT / 'src'))
    from distributions import Distribution1D, ProductDistribution
    from sir_core import CostVector, FirstStageProblem, solve_first_stage

    result = solve_first_stage(FirstStageProblem([1.0], [-5.0], [5.0]), CostVector.single(2.0, 0.0),
                               ProductDistribution([Distribution1D.point_mass(3.0)]), 'hat')
    return abs(result.x[0] - 3.5) < 1e-9


def main():
    print("🚀 Setting up SIR-DRO...")

    in_venv = hasattr(sys, 'real_prefix') or sys.base_prefix != sys.prefix
    if not in_venv:
        print("❌ Please activate your virtual environment first!")
        print("Run: python -m venv sirdro_env && source sirdro_env/bin/activate")
        return

    # numpy first: scipy and pandas wheels build against it
    pins = read_pins()
    batches = [[p for p in pins if p.startswith('numpy')], [p for p in pins if not p.startswith('numpy')]]
    for i, batch in enumerate(batches, 1):
        if batch and not run_command(f"{sys.executable} -m pip install {' '.join(batch)}",
                                     f"Installing batch {i}/{len(batches)}"):
            print(f"Failed to install batch: {batch}")
            return

    print("\n🧪 Checking versions...")
    try:
        if not check_versions():
            print("❌ Upgrade the packages marked above")
            return
    except ImportError as e:
        print(f"❌ Import failed: {e}")
        return

    print("\n🧪 Running smoke test...")
    if not smoke_test():
        print("❌ Smoke test returned an unexpected optimum")
        return
    print("✅ Smoke test passed")

    run_command(f"{sys.executable} main.py generate", "Writing sample problem files")

    print("\n🎉 Setup completed successfully!")
    print("\nNext steps:")
    print("1. Run: python main.py eval data/problems/pragmatic.txt --x 0.5 --robust pragmatic")
    print("2. Run: python main.py experiment bound-curves")
    print("3. Run: python main.py test")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        # invoked by a build backend (egg_info, editable_wheel, ...): package metadata lives in pyproject.toml
        from setuptools import setup
        setup()
    else:
        main()
