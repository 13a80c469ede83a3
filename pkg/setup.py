#!/usr/bin/env python3
"""
Setup script for the adversarial climbing pipeline

Copies env.example to .env, checks the numeric / imaging stack, validates
the ADVCLIMB_* settings and creates the artifact root.
"""

import sys
from pathlib import Path

# distribution name -> import name
REQUIRED_PACKAGES = {
    "numpy": "numpy",
    "scipy": "scipy",
    "Pillow": "PIL",
    "matplotlib": "matplotlib",
    "pydantic": "pydantic",
    "pydantic-settings": "pydantic_settings",
    "python-dotenv": "dotenv",
}


def create_env_file(template: Path = Path("env.example"), target: Path = Path(".env")) -> bool:
    """Seed .env with the documented ADVCLIMB_* defaults."""
    if target.exists():
        print(f"⚠️  {target} already exists, keeping it")
        return True
    if not template.exists():
        print(f"❌ {template} not found")
        return False

    print(f"📝 Writing {target} from {template}...")
    try:
        target.write_text(template.read_text())
    except OSError as e:
        print(f"❌ Could not write {target}: {e}")
        return False
    print(f"✅ {target} created")
    return True


def check_dependencies() -> bool:
    print("🔍 Checking the numeric and imaging stack...")
    missing = []
    for package, module in REQUIRED_PACKAGES.items():
        try:
            __import__(module)
        except ImportError:
            missing.append(package)

    if missing:
        print(f"❌ Missing packages: {', '.join(missing)}")
        print("   pip install -r requirements.txt")
        return False
    print(f"✅ {len(REQUIRED_PACKAGES)} packages importable")
    return True


def validate_settings() -> bool:
    """Load Settings once so a malformed .env fails here rather than mid-run."""
    from pydantic import ValidationError

    try:
        from app.core.config import Settings, parse_float_list

        loaded = Settings()
        grid = parse_float_list(loaded.theta_grid)
    except (ValidationError, ValueError) as e:
        print(f"❌ Invalid ADVCLIMB_* settings: {e}")
        return False

    if not grid or any(not 0.0 < t < 1.0 for t in grid):
        print(f"❌ ADVCLIMB_THETA_GRID must list thresholds inside (0, 1), got {loaded.theta_grid!r}")
        return False
    print(f"✅ Settings: T={loaded.steps}, xi={loaded.xi}, lambda={loaded.lambda_seg}/{loaded.lambda_loc}, tau={loaded.tau}")

    root = Path(loaded.output_root)
    root.mkdir(parents=True, exist_ok=True)
    print(f"✅ Output root ready at {root.resolve()}")
    return True


def main():
    print("🚀 Setting up the adversarial climbing pipeline")
    print("=" * 50)

    if sys.version_info < (3, 9):
        print("❌ Python 3.9 or higher is required")
        sys.exit(1)
    print(f"✅ Python {sys.version_info.major}.{sys.version_info.minor}")

    for step in (create_env_file, check_dependencies, validate_settings):
        if not step():
            sys.exit(1)

    print("\n" + "=" * 50)
    print("🎉 Setup completed!")
    print("\nNext steps:")
    print("1. Adjust defaults in .env (ADVCLIMB_* variables)")
    print("2. Run the whole pipeline: ./scripts/run_pipeline.sh")
    print("3. Or step by step: python advclimb_cli.py --help")
    print("4. Tests: pytest -m 'not slow' (fast) or pytest (includes end-to-end)")


if __name__ == "__main__":
    main()
