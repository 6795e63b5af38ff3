import logging
from functools import lru_cache
from typing import Any, Dict, Optional, Type

from sqlalchemy import create_engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker
from sqlalchemy.pool import StaticPool

from config import RUNS_DATABASE_URL
from td_dispatch.core.exceptions import DatabaseConnectionError

logger = logging.getLogger(__name__)

Base = declarative_base()


class DatabaseConfig:
    """
    Engine settings for the run history
    """

    POOL_RECYCLE = 1800
    MEMORY_MARKER = ':memory:'


def engine_options(database_url: str) -> Dict[str, Any]:
    """
    Keyword arguments for `create_engine`

    An in-memory SQLite database lives only as long as its connection, so it
    is pinned to a single shared one.
    """
    if database_url.startswith('sqlite') and DatabaseConfig.MEMORY_MARKER in database_url:
        return {'poolclass': StaticPool, 'connect_args': {'check_same_thread': False}}
    return {'pool_recycle': DatabaseConfig.POOL_RECYCLE}


class Database:
    """
    Process-wide session factory for the run history
    """

    _instance: Optional[Type[Session]] = None
    _url: Optional[str] = None

    @classmethod
    def configure(cls, database_url: Optional[str]) -> None:
        """
        Point the factory at another database, disposing of any open engine

        Args:
            database_url (Optional[str]): SQLAlchemy URL, or None to fall back
                to RUNS_DATABASE_URL
        """
        cls.close()
        cls._url = database_url

    @classmethod
    @lru_cache(maxsize=1)
    def get_instance(cls) -> Session:
        """
        Session bound to the configured database, creating tables on first use

        Returns:
            Session: SQLAlchemy session instance

        Raises:
            DatabaseConnectionError: If no URL is set or the engine cannot be built
        """
        if cls._instance is None:
            database_url = cls._url or RUNS_DATABASE_URL
            if not database_url:
                raise DatabaseConnectionError('RUNS_DATABASE_URL is empty')

            try:
                engine = create_engine(database_url, **engine_options(database_url))
                Base.metadata.create_all(engine)
                cls._instance = sessionmaker(bind=engine)
                logger.info(f'Run history at {database_url}')
            except Exception as e:
                error_msg = f'Failed to open run history {database_url}: {str(e)}'
                logger.error(error_msg)
                raise DatabaseConnectionError(error_msg) from e

        return cls._instance()

    @classmethod
    def close(cls) -> None:
        """
        Dispose of the engine and forget the cached session

        Raises:
            DatabaseConnectionError: If the engine cannot be disposed of
        """
        if cls._instance is None:
            return
        try:
            cls._instance.kw['bind'].dispose()
        except Exception as e:
            error_msg = f'Error closing run history: {str(e)}'
            logger.error(error_msg)
            raise DatabaseConnectionError(error_msg) from e
        finally:
            cls._instance = None
            cls.get_instance.cache_clear()
        logger.debug('Run history closed')
