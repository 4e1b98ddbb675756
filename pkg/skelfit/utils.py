# skelfit/utils.py
import random
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from dotenv import load_dotenv
from jinja2 import Environment, FileSystemLoader, select_autoescape

from .config import config

TEMPLATE_DIR = Path(__file__).parent / "templates"


def load_env(env_path: str = ".env") -> None:
    """Load environment variables from .env."""
    load_dotenv(env_path)


def render_template(template_name: str, context: dict, dest: Path, base_template_dir: Path = TEMPLATE_DIR) -> Path:
    env = Environment(
        loader=FileSystemLoader(str(base_template_dir)),
        autoescape=select_autoescape(["html", "xml", "j2"]),
    )
    tpl = env.get_template(template_name)
    content = tpl.render(**context)

    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(content, encoding="utf-8")
    return dest


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)


def configure_torch(threads: Optional[int] = None) -> None:
    """float64 default dtype; thread count from the argument or the torch_threads setting"""
    torch.set_default_dtype(torch.float64)
    threads = threads or config.get_int("torch_threads", 0)
    if threads > 0:
        torch.set_num_threads(threads)
