"""CompiledPlan and its versioned JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import PlanFormatError
from ..fusion.specialize import KernelSpec
from ..shape_analysis.program import ShapeProgram, instr_from_json, instr_to_json
from . import program as rp

FORMAT = "disc.plan"
VERSION = 1


@dataclass
class CompiledPlan:
    metadata: dict
    inputs: list
    outputs: list
    shape_program: ShapeProgram
    kernels: list
    program: list
    buffers: list
    num_version_regs: int
    num_launch_regs: int
    symbols: dict = field(default_factory=dict)  # bound sym id -> user-facing name

    @property
    def static(self) -> bool:
        return bool(self.metadata.get("static"))

    @property
    def launch_count(self) -> int:
        return sum(isinstance(i, rp.Launch) for i in self.program)

    @property
    def library_calls(self) -> int:
        return sum(isinstance(i, rp.LibraryCall) for i in self.program)

    @property
    def eval_shape_count(self) -> int:
        return sum(isinstance(i, rp.EvalShape) for i in self.program)

    def host_instruction_count(self, verify: bool = False) -> int:
        """Host instructions executed per run, counting shape instructions inside each EvalShape."""
        n = 0
        for ins in self.program:
            if isinstance(ins, rp.EvalShape):
                if ins.checks and not verify:
                    continue
                n += ins.end - ins.start
            else:
                n += 1
        return n

    def to_json(self) -> dict:
        sp = self.shape_program
        return {
            "format": FORMAT,
            "version": VERSION,
            "metadata": self.metadata,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "symbols": {str(k): v for k, v in sorted(self.symbols.items())},
            "shape_program": {
                "instructions": [instr_to_json(i) for i in sp.instructions],
                "levels": list(sp.levels),
                "checks": [instr_to_json(i) for i in sp.checks],
                "num_registers": sp.num_registers,
                "literals": sp.literals,
                "operand_regs": sp.operand_regs,
                "bound": {str(k): v for k, v in sorted(sp.bound.items())},
            },
            "kernels": [k.to_json() for k in self.kernels],
            "registers": {"shape": sp.num_registers, "version": self.num_version_regs,
                          "launch": self.num_launch_regs},
            "buffers": self.buffers,
            "program": [rp.to_json(i) for i in self.program],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"

    @staticmethod
    def from_json(doc: dict) -> "CompiledPlan":
        if not isinstance(doc, dict) or doc.get("format") != FORMAT:
            raise PlanFormatError("not a disc plan document")
        if doc.get("version") != VERSION:
            raise PlanFormatError(f"unsupported plan version {doc.get('version')!r}; this build reads {VERSION}")
        try:
            s = doc["shape_program"]
            sp = ShapeProgram(
                [instr_from_json(i) for i in s["instructions"]],
                [instr_from_json(i) for i in s["checks"]],
                s["num_registers"],
                {k: list(v) for k, v in s["literals"].items()},
                {k: list(v) for k, v in s["operand_regs"].items()},
                {int(k): v for k, v in s["bound"].items()},
                list(s["levels"]),
            )
            regs = doc["registers"]
            return CompiledPlan(
                metadata=doc["metadata"], inputs=doc["inputs"], outputs=doc["outputs"], shape_program=sp,
                kernels=[KernelSpec.from_json(k) for k in doc["kernels"]],
                program=[rp.from_json(i) for i in doc["program"]],
                buffers=doc["buffers"], num_version_regs=regs["version"], num_launch_regs=regs["launch"],
                symbols={int(k): v for k, v in doc.get("symbols", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise PlanFormatError(f"malformed plan: {type(e).__name__}: {e}") from None

    @staticmethod
    def loads(text: str) -> "CompiledPlan":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise PlanFormatError(f"plan is not valid JSON: {e}") from None
        return CompiledPlan.from_json(doc)


def load_plan(path) -> CompiledPlan:
    with open(path, encoding="utf-8") as f:
        return CompiledPlan.loads(f.read())


def save_plan(plan: CompiledPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(plan.dumps())
