from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    """Pipeline defaults loaded from environment variables (ADVCLIMB_*) and .env."""

    # Paths
    # Root for every artifact a run writes; each subcommand gets its own --out below it
    output_root: str = "./runs"
    data_root: Optional[str] = None

    # Runtime
    log_level: str = "INFO"
    workers: int = 1
    seed: int = 0

    # Adversarial climbing
    steps: int = 27
    xi: float = 0.008
    lambda_seg: float = 7.0
    # Softmax-trained classifiers have a different logit scale
    lambda_loc: float = 0.01
    tau: float = 0.5
    suppress_other_classes: bool = True

    # Classifier training
    epochs: int = 60
    batch_size: int = 16
    learning_rate: float = 1.0

    # Synthetic data
    image_size: int = 32
    class_count: int = 3
    objects_per_image: int = 1
    train_count: int = 200
    test_count: int = 50
    head_contrast: float = 0.45
    body_contrast: float = 0.12

    # Evaluation
    # Comma-separated binarization thresholds shared by seeding sweeps and MaxBoxAccV2
    theta_grid: str = ",".join(f"{0.05 * i:.2f}" for i in range(1, 20))
    iou_thresholds: str = "0.3,0.5,0.7"

    # Diagnostics
    landscape_grid: int = 21
    landscape_radius: float = 1.0

    class Config:
        env_file = ".env"
        env_prefix = "ADVCLIMB_"
        case_sensitive = False


def parse_float_list(csv: Optional[str]) -> list:
    """Parse a comma-separated list of floats, ignoring blanks."""
    if not csv:
        return []
    return [float(part) for part in csv.split(",") if part.strip()]


# Global settings instance
settings = Settings()
