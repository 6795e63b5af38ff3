import argparse
import logging
from typing import Callable

from td_dispatch.core.exceptions import TDDispatchError

logger = logging.getLogger(__name__)


class BaseCommand:
    """Base command group class that all feature command modules should inherit from"""

    def __init__(self, app) -> None:
        """
        Initialize the base command group

        Args:
            app (DispatchApp): The application instance
        """
        self.app = app
        logger.debug(f'Initialized {self.__class__.__name__}')

    def add_command(
        self,
        name: str,
        help: str,
        handler: Callable[[argparse.Namespace], int],
    ) -> argparse.ArgumentParser:
        """
        Register a subcommand whose handler runs behind the shared error handler

        Args:
            name (str): Subcommand name as typed on the command line
            help (str): One line description
            handler (Callable): Function receiving the parsed namespace

        Returns:
            argparse.ArgumentParser: The subparser, for adding arguments
        """
        parser = self.app.subparsers.add_parser(name, help=help, description=help)
        parser.set_defaults(handler=self._guarded(name, handler))
        return parser

    def _guarded(
        self, name: str, handler: Callable[[argparse.Namespace], int]
    ) -> Callable[[argparse.Namespace], int]:
        def run(args: argparse.Namespace) -> int:
            try:
                return handler(args)
            except TDDispatchError as error:
                return self.command_error(name, error)

        return run

    def command_error(self, name: str, error: Exception) -> int:
        """
        Local error handler for all commands in this group

        Args:
            name (str): The failing subcommand
            error (Exception): The error that was raised

        Returns:
            int: Process exit status
        """
        logger.error(f'Error in {name}: {str(error)}')
        return 1
