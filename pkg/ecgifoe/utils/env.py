import logging
import os
from importlib import metadata

from ecgifoe import __version__

PACKAGES = ("numpy", "scipy", "pandas", "networkx", "matplotlib", "Pillow", "PyYAML", "rich", "psutil")


def collect_env():
    """
    Log package versions, platform and CPU/memory state at debug level.

    Returns:
        dict: The collected values.
    """
    env = {"ecgifoe": __version__, "path": os.path.abspath(__file__)}
    logging.debug("\n======== ecgifoe ========")
    logging.debug("ecgifoe version: " + str(__version__))
    logging.debug("Execution path:" + env["path"])

    logging.debug("\n======== Running Environment ========")
    import platform
    import sys

    env["platform"] = platform.platform()
    env["python"] = sys.version
    logging.debug("OS: " + env["platform"])
    logging.debug("Hardware: " + platform.machine())
    logging.debug("Python version: " + env["python"])

    for package in PACKAGES:
        try:
            env[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            env[package] = None
        logging.debug("{} version: {}".format(package, env[package] or "not installed"))

    logging.debug("\n======== CPU Configuration ========")
    try:
        import psutil

        load1, load5, load15 = psutil.getloadavg()
        env["cpu_usage"] = (load15 / os.cpu_count()) * 100
        memory = psutil.virtual_memory()
        env["memory_available_gb"] = memory.available / 1024 ** 3
        logging.debug("The CPU usage is : {:.0f}%".format(env["cpu_usage"]))
        logging.debug("Available CPU Memory: {:.1f} G / {:.1f}G".format(env["memory_available_gb"], memory.total / 1024 ** 3))
    except ImportError:
        logging.debug("psutil is not installed")
    return env
