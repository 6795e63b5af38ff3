import logging
import sys
from typing import NoReturn

from td_dispatch.core.app import DispatchApp

logger = logging.getLogger(__name__)


def main() -> NoReturn:
    """
    Build the command line application and run the requested subcommand
    """
    try:
        app = DispatchApp()
        sys.exit(app.run(sys.argv[1:]))
    except KeyboardInterrupt:
        sys.exit(130)
    except Exception as e:
        logger.critical(f'Failed to run command: {str(e)}')
        sys.exit(1)


if __name__ == '__main__':
    main()
