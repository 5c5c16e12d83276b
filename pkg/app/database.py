from __future__ import annotations

import logging
from contextlib import asynccontextmanager
from functools import lru_cache
from typing import AsyncIterator, Optional

from sqlalchemy.ext.asyncio import AsyncEngine, async_sessionmaker, create_async_engine
from sqlmodel import SQLModel
from sqlmodel.ext.asyncio.session import AsyncSession

from app.config import settings
# Импортируем модели, чтобы таблицы были зарегистрированы в SQLModel.metadata
from app.models import RunJournal, RunReport

logger = logging.getLogger(__name__)


@lru_cache
def get_engine(url: Optional[str] = None) -> AsyncEngine:
    """Движок журнала создаётся только когда журнал реально нужен."""
    database_url = url or settings.database_url
    if not database_url:
        raise RuntimeError("QSDC_DATABASE_URL is not set, the run journal is disabled")
    return create_async_engine(database_url, echo=False, future=True)


@asynccontextmanager
async def get_session(url: Optional[str] = None) -> AsyncIterator[AsyncSession]:
    factory = async_sessionmaker(get_engine(url), expire_on_commit=False, class_=AsyncSession)
    session = factory()
    try:
        yield session
    finally:
        await session.close()


async def init_db(url: Optional[str] = None) -> None:
    async with get_engine(url).begin() as connection:
        await connection.run_sync(SQLModel.metadata.create_all)


async def record_run(report: RunReport, url: Optional[str] = None) -> RunJournal:
    """Добавляет в журнал одну строку с итогами прогона."""
    await init_db(url)
    config = report.config
    entry = RunJournal(
        variant=config.variant.value,
        m=config.m,
        backend=config.backend.value,
        strategy=config.attack.strategy.value,
        leg=config.attack.leg.value,
        trials=config.trials,
        seed=str(config.seed) if config.seed is not None else None,
        decode_success_rate=report.aggregates.decode_success_rate,
        detection_rate=report.aggregates.detection_rate,
        invariant_violations=len(report.invariant_violations),
        report_path=str(config.out) if config.out is not None else None,
    )
    async with get_session(url) as session:
        session.add(entry)
        await session.commit()
        await session.refresh(entry)
    logger.info(f"Journal entry {entry.id} recorded")
    return entry
