import datetime
import hashlib
import json
import os
from typing import Dict, Optional

from dotenv import load_dotenv
from sqlalchemy import DateTime, Float, Integer, String, create_engine, func
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column, sessionmaker

from sparse_additive_testing.logging import stdout_logger
from sparse_additive_testing.rate_calculus import ProblemDims
from sparse_additive_testing.statistics import DenseStatistic, Statistic

load_dotenv()

"""
The calibration cache: database models and related utilities.
"""

DEFAULT_CACHE_DIR = os.path.join('~', '.cache', 'sparse_additive_testing')
CACHE_FILE = 'calibration.sqlite'


class Base(DeclarativeBase):
    """
    The base class to extend for all database models.
    """
    pass


class CalibrationRecord(Base):
    """
    A calibrated null threshold, keyed by a content hash of everything it depends on.
    """
    __tablename__ = 'calibration_record'
    id: Mapped[int] = mapped_column(primary_key=True)
    key_hash: Mapped[str] = mapped_column(String(64), unique=True, index=True)
    statistic_kind: Mapped[str] = mapped_column(String(10))
    d: Mapped[Optional[int]] = mapped_column(Integer)
    r: Mapped[Optional[float]] = mapped_column(Float)
    nu: Mapped[Optional[int]] = mapped_column(Integer)
    p: Mapped[int] = mapped_column(Integer)
    n: Mapped[float] = mapped_column(Float)
    level: Mapped[float] = mapped_column(Float)
    reps: Mapped[int] = mapped_column(Integer)
    seed: Mapped[str] = mapped_column(String(20))
    threshold: Mapped[float] = mapped_column(Float)
    created: Mapped[Optional[datetime.datetime]] = mapped_column(DateTime, server_default=func.now())

    def __repr__(self) -> str:
        return f'Calibration Record (id={self.id!r}, statistic_kind={self.statistic_kind!r}, p={self.p!r}, level={self.level!r})'


def cache_url() -> str:
    """
    The SQLAlchemy URL of the cache: SAT_CACHE_URL if set, else a SQLite file in SAT_CACHE_DIR.
    """
    url = os.getenv('SAT_CACHE_URL')
    if url:
        return url
    directory = os.path.expanduser(os.getenv('SAT_CACHE_DIR') or DEFAULT_CACHE_DIR)
    os.makedirs(directory, exist_ok=True)
    return f'sqlite:///{os.path.join(directory, CACHE_FILE)}'


def get_database_session(**kwargs) -> sessionmaker:
    """
    Gets the database connection.

    Returns
    -------
    sessionmaker
      A session factory bound to the cache engine.
    """
    engine = create_engine(cache_url(), **kwargs)
    return sessionmaker(engine)


def statistic_fields(statistic: Statistic) -> Dict[str, object]:
    if isinstance(statistic, DenseStatistic):
        return {'statistic_kind': statistic.kind, 'd': None, 'r': None, 'nu': statistic.nu}
    return {'statistic_kind': statistic.kind, 'd': statistic.d, 'r': statistic.r, 'nu': None}


def calibration_key(statistic: Statistic, dims: ProblemDims, level: float, reps: int, seed: int) -> str:
    """
    SHA-256 of the canonical JSON of the statistic identity, p, n, level, reps and seed.
    """
    content = dict(statistic_fields(statistic), p=dims.p, n=repr(float(dims.n)), level=repr(level), reps=reps, seed=str(seed))
    if content['r'] is not None:
        content['r'] = repr(content['r'])
    text = json.dumps(content, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


class CalibrationCache:
    """
    Looks up and stores calibrated thresholds so reruns only simulate what is new.

    Parameters
    ----------
    sessions : sessionmaker, optional
        The session factory; the environment-configured cache by default.
    """

    def __init__(self, sessions: Optional[sessionmaker] = None, **kwargs):
        self.sessions = sessions if sessions is not None else get_database_session(**kwargs)
        Base.metadata.create_all(self.sessions.kw.get('bind'))

    def lookup(self, statistic: Statistic, dims: ProblemDims, level: float, reps: int, seed: int) -> Optional[float]:
        key = calibration_key(statistic, dims, level, reps, seed)
        with self.sessions.begin() as session:
            record = session.query(CalibrationRecord).filter_by(key_hash=key).one_or_none()
            if record is None:
                stdout_logger.info(f'Calibration cache miss for {statistic!r} at p={dims.p}, level={level!r}.')
                return None
            return record.threshold

    def store(self, statistic: Statistic, dims: ProblemDims, level: float, reps: int, seed: int, threshold: float) -> None:
        key = calibration_key(statistic, dims, level, reps, seed)
        with self.sessions.begin() as session:
            if session.query(CalibrationRecord).filter_by(key_hash=key).one_or_none() is not None:
                return
            session.add(CalibrationRecord(key_hash=key, p=dims.p, n=float(dims.n), level=level, reps=reps,
                                          seed=str(seed), threshold=threshold, **statistic_fields(statistic)))

    def count(self) -> int:
        with self.sessions.begin() as session:
            return session.query(CalibrationRecord).count()

    def summary(self) -> Dict[str, int]:
        """
        The number of cached thresholds per statistic kind.
        """
        with self.sessions.begin() as session:
            rows = (session.query(CalibrationRecord.statistic_kind, func.count(CalibrationRecord.id))
                    .group_by(CalibrationRecord.statistic_kind).all())
            return {kind: count for kind, count in rows}

    def clear(self, statistic_kind: Optional[str] = None) -> int:
        """
        Deletes cached thresholds, all of them or those of one statistic kind.

        Returns
        -------
        int
            The number of records deleted.
        """
        with self.sessions.begin() as session:
            query = session.query(CalibrationRecord)
            if statistic_kind is not None:
                query = query.filter_by(statistic_kind=statistic_kind)
            return query.delete()
