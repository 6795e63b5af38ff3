import argparse
import importlib
import logging
from pathlib import Path
from typing import List, Optional

from config import LOG_LEVEL

logging.basicConfig(
    level=LOG_LEVEL, format='%(asctime)s %(levelname)s %(name)s: %(message)s'
)
logger = logging.getLogger(__name__)


class DispatchApp:
    """
    Command line application that collects the subcommands of every feature
    """

    PROG = 'td-dispatch'
    FEATURES_DIRECTORY = Path(__file__).resolve().parent.parent / 'features'

    def __init__(self) -> None:
        self.parser = argparse.ArgumentParser(
            prog=self.PROG,
            description='Online pickup-and-delivery scheduling under time-dependent travel times',
        )
        self.subparsers = self.parser.add_subparsers(dest='command', required=True)
        self.loaded: List[str] = []
        self.load_commands()

    def load_commands(self) -> None:
        """
        Load all command modules from the features directory
        Handles errors for individual feature loading
        """
        if not self.FEATURES_DIRECTORY.exists():
            logger.error(f'Features directory not found: {self.FEATURES_DIRECTORY}')
            return

        for feature_dir in sorted(self.FEATURES_DIRECTORY.iterdir()):
            if not feature_dir.is_dir():
                continue

            command_file = feature_dir / 'command.py'
            if not command_file.exists():
                continue

            module_path = f'td_dispatch.features.{feature_dir.name}.command'
            try:
                module = importlib.import_module(module_path)
                module.setup(self)
                self.loaded.append(feature_dir.name)
                logger.debug(f'Loaded feature: {feature_dir.name} ({module_path})')
            except Exception as e:
                logger.error(f'Failed to load feature {feature_dir.name}: {str(e)}')

    def run(self, argv: Optional[List[str]] = None) -> int:
        """
        Parse arguments and dispatch to the selected subcommand

        Args:
            argv: Command line arguments without the program name

        Returns:
            int: Process exit status
        """
        args = self.parser.parse_args(argv)
        return args.handler(args)
