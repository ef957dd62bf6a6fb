#!/usr/bin/env python3
"""
Query-focused abstractive summarization toolkit
Entry point for the command line
"""

import os
import sys
import logging
from logging.handlers import RotatingFileHandler

from config import Config
from handlers.commands import run


def setup_logging():
    """Configure logging for the application"""
    # Create logs directory if it doesn't exist
    os.makedirs(Config.LOG_DIR, exist_ok=True)

    level = getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO)
    formatter = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    try:
        logging.basicConfig(
            level=level,
            format=formatter,
            handlers=[
                RotatingFileHandler(
                    os.path.join(Config.LOG_DIR, 'qfas.log'),
                    maxBytes=10*1024*1024,  # 10MB
                    backupCount=5,
                    encoding='utf-8'
                ),
                # results go to stdout, so diagnostics stay on stderr
                logging.StreamHandler(sys.stderr)
            ]
        )
    except OSError as e:
        logging.basicConfig(level=level, format=formatter, handlers=[logging.StreamHandler(sys.stderr)])
        sys.stderr.write(f"Warning: file logging disabled: {e}\n")

    # Reduce noise from external libraries
    logging.getLogger('torch').setLevel(logging.WARNING)
    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('urllib3').setLevel(logging.WARNING)

    logger = logging.getLogger(__name__)
    logger.debug("Logging configured successfully")
    return logger


def check_dependencies():
    """Check if all required dependencies are available"""
    logger = logging.getLogger(__name__)

    for module, package in (('torch', 'torch'), ('numpy', 'numpy'), ('scipy', 'scipy'),
                            ('dotenv', 'python-dotenv'), ('tqdm', 'tqdm')):
        try:
            imported = __import__(module)
            logger.debug(f"{package} version: {getattr(imported, '__version__', 'unknown')}")
        except ImportError:
            logger.error(f"{package} not found. Please install it with: pip install {package}")
            return False
    return True


if __name__ == '__main__':
    setup_logging()

    if not check_dependencies():
        sys.stderr.write("Missing dependencies. Please install required packages.\n")
        sys.exit(3)

    sys.exit(run(sys.argv[1:]))
