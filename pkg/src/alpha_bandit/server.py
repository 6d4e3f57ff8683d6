import asyncio
import json
import logging
import signal
import traceback
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Optional

from mcp.server import Server
from mcp.types import TextContent, Tool

from .config import load_config
from .harness import run_experiment, sweep_grid
from .run_pool import default_jobs
from .version import __version__

logger = logging.getLogger("alpha-bandit.server")

app: Server = Server("alpha-bandit")


def _config_argument(arguments: dict) -> Path:
    config = arguments.get("config")
    if not config:
        raise ValueError("No config provided")
    if not isinstance(config, str):
        raise ValueError("'config' must be a string path")
    return Path(config)


def _optional_out(arguments: dict) -> Optional[Path]:
    out = arguments.get("out")
    if out is None:
        return None
    if not isinstance(out, str):
        raise ValueError("'out' must be a string path")
    return Path(out)


def _integer(arguments: dict, name: str, minimum: int) -> Optional[int]:
    value = arguments.get(name)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"'{name}' must be an integer")
    if value < minimum:
        raise ValueError(f"'{name}' must be at least {minimum}")
    return value


class RunToolHandler:
    """Runs one seeded experiment."""

    name = "bandit_run"
    description = "Run the configured bandit policy for one seed"

    def get_tool_description(self) -> Tool:
        return Tool(
            name=self.name,
            description=self.description,
            inputSchema={
                "type": "object",
                "properties": {
                    "config": {"type": "string", "description": "Path to the experiment TOML file"},
                    "seed": {"type": "integer", "minimum": 0, "description": "Run seed"},
                    "out": {
                        "type": "string",
                        "description": "Directory for the per-round log; omit to skip writing it",
                    },
                },
                "required": ["config", "seed"],
            },
        )

    async def run_tool(self, arguments: dict) -> Sequence[TextContent]:
        config_path = _config_argument(arguments)
        seed = _integer(arguments, "seed", 0)
        if seed is None:
            raise ValueError("No seed provided")
        out = _optional_out(arguments)

        config = load_config(config_path)
        result = await asyncio.to_thread(run_experiment, config, seed, out)
        payload = {
            "policy": result.label,
            "seed": result.seed,
            "rounds": result.rounds,
            "final_regret": result.final_regret,
            "log_path": None if result.log_path is None else str(result.log_path),
        }
        return [TextContent(type="text", text=json.dumps(payload))]


class SweepToolHandler:
    """Sweeps the alpha grid and the meta-policies."""

    name = "bandit_sweep"
    description = "Sweep the alpha grid plus OPLINUCB and DOPLINUCB and return the summary table"

    def get_tool_description(self) -> Tool:
        return Tool(
            name=self.name,
            description=f"{self.description}\nDefault worker processes: {default_jobs()}",
            inputSchema={
                "type": "object",
                "properties": {
                    "config": {"type": "string", "description": "Path to the experiment TOML file"},
                    "out": {
                        "type": "string",
                        "description": "Directory for summary.csv and per_alpha.csv",
                    },
                    "jobs": {"type": "integer", "minimum": 1, "description": "Worker processes"},
                },
                "required": ["config"],
            },
        )

    async def run_tool(self, arguments: dict) -> Sequence[TextContent]:
        config_path = _config_argument(arguments)
        out = _optional_out(arguments)
        jobs = _integer(arguments, "jobs", 1)

        config = load_config(config_path)
        table = await asyncio.to_thread(sweep_grid, config, out, jobs)
        return [TextContent(type="text", text=table.frame.to_csv(index_label="statistic"))]


tool_handlers = {handler.name: handler for handler in (RunToolHandler(), SweepToolHandler())}


@app.list_tools()
async def list_tools() -> list[Tool]:
    """List available tools."""
    return [handler.get_tool_description() for handler in tool_handlers.values()]


@app.call_tool()
async def call_tool(name: str, arguments: Any) -> Sequence[TextContent]:
    """Handle tool calls."""
    try:
        handler = tool_handlers.get(name)
        if handler is None:
            raise ValueError(f"Unknown tool: {name}")

        if not isinstance(arguments, dict):
            raise ValueError("Arguments must be a dictionary")

        return await handler.run_tool(arguments)

    except Exception as e:
        logger.error(traceback.format_exc())
        raise RuntimeError(f"Error running {name}: {str(e)}") from e


async def main() -> None:
    """Main entry point for the MCP server."""
    logger.info(f"Starting alpha-bandit MCP server v{__version__}")

    loop = asyncio.get_running_loop()
    stop_event = asyncio.Event()

    def handle_signal():
        if not stop_event.is_set():
            logger.info("Received shutdown signal, stopping server...")
            stop_event.set()

    for sig in (signal.SIGTERM, signal.SIGINT):
        loop.add_signal_handler(sig, handle_signal)

    try:
        from mcp.server.stdio import stdio_server

        async with stdio_server() as (read_stream, write_stream):
            server_task = asyncio.create_task(
                app.run(read_stream, write_stream, app.create_initialization_options())
            )
            stop_task = asyncio.create_task(stop_event.wait())
            done, pending = await asyncio.wait(
                [server_task, stop_task], return_when=asyncio.FIRST_COMPLETED
            )

            for task in done:
                await task

            for task in pending:
                task.cancel()
                try:
                    await task
                except asyncio.CancelledError:
                    pass

    except Exception as e:
        logger.error(f"Server error: {str(e)}")
        raise
    finally:
        for sig in (signal.SIGTERM, signal.SIGINT):
            loop.remove_signal_handler(sig)

        logger.info("Server shutdown complete")
