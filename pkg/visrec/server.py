import asyncio
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from visrec.container import Container
from visrec.core.exception.base import BaseCustomException
from visrec.domain.recommendation.controller import router as recommendation_router
from visrec.domain.recommendation.exception import RequestTimeoutError

logger = logging.getLogger(__name__)


def init_exception_handlers(app: FastAPI) -> None:
    """Every error leaves as {code, message}."""

    @app.exception_handler(Exception)
    def handle_root_exception(request: Request, exc: Exception) -> JSONResponse:
        logger.exception(f"Unhandled error on {request.url.path}")
        return JSONResponse(
            status_code=500,
            content={"code": "INTERNAL", "message": str(exc)},
        )

    @app.exception_handler(BaseCustomException)
    def handle_custom_exception(request: Request, exc: BaseCustomException) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status_code,
            content=exc.to_body(),
        )

    @app.exception_handler(RequestValidationError)
    def handle_fastapi_request_exception(request: Request, exc: RequestValidationError) -> JSONResponse:
        err = exc.errors()[0]
        inp = err.get("input")
        loc = err["loc"]

        msg = f"Invalid {loc[-1]}: '{inp}' is invalid. {err['msg']}"
        return JSONResponse(
            status_code=400,
            content={"code": "BAD_REQUEST", "message": msg},
        )


def init_routers(app: FastAPI) -> None:
    app.include_router(recommendation_router, prefix="/v1")


def init_middlewares(app: FastAPI, request_timeout: float) -> None:
    @app.middleware("http")
    async def timeout_middleware(request: Request, call_next):
        try:
            return await asyncio.wait_for(call_next(request), timeout=request_timeout)
        except asyncio.TimeoutError:
            exc = RequestTimeoutError(request_timeout)
            return JSONResponse(status_code=exc.status_code, content=exc.to_body())


def create_app(container: Container, start_worker: bool = True) -> FastAPI:

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        worker = container.ingestion_worker
        if start_worker and worker is not None:
            worker.start()
        yield
        if worker is not None and worker.is_running():
            worker.stop(timeout=5.0)

    app = FastAPI(
        title="visrec server", description="visual similarity recommendations", version="0.1.0", lifespan=lifespan
    )
    app.state.container = container
    init_middlewares(app, container.config.request_timeout)
    init_exception_handlers(app)
    init_routers(app)

    return app
