//! Big-step reference evaluator, written directly against the AST.
//!
//! It shares no code with the small-step interpreter: blocks are Rust
//! recursion, branches are return values, and exceptions are `Err`. It only
//! agrees with the interpreter on programs that pass validation.

use wasmlite_core::syntax::{BinOp, InstrKind, Instr, ModuleAst, RelOp};

const PAGE: usize = 65_536;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expected {
    Returned(Vec<i32>),
    Trap(&'static str),
    Exception(i32),
    /// The instruction budget ran out first.
    OutOfBudget,
}

enum Abort {
    Trap(&'static str),
    Throw(i32),
    Budget,
}

enum Flow {
    Normal,
    Br(u32, Vec<i32>),
    Return(Vec<i32>),
}

pub struct Oracle<'a> {
    module: &'a ModuleAst,
    pub memory: Vec<u8>,
    pub max_pages: u32,
    pub globals: Vec<i32>,
    pub call_depth_limit: usize,
    budget: u64,
    depth: usize,
    labels: Vec<usize>,
}

impl<'a> Oracle<'a> {
    pub fn new(module: &'a ModuleAst, max_pages: u32) -> Self {
        Oracle {
            module,
            memory: vec![0; module.memory.unwrap_or(0) as usize * PAGE],
            max_pages,
            globals: module.globals.iter().map(|g| g.init).collect(),
            call_depth_limit: 1_000,
            budget: 0,
            depth: 0,
            labels: Vec::new(),
        }
    }

    /// Runs `func`, dispatching at most `budget` instructions.
    pub fn run(&mut self, func: usize, args: &[i32], budget: u64) -> Expected {
        self.budget = budget;
        self.depth = 0;
        match self.call(func, args.to_vec()) {
            Ok(v) => Expected::Returned(v),
            Err(Abort::Trap(k)) => Expected::Trap(k),
            Err(Abort::Throw(v)) => Expected::Exception(v),
            Err(Abort::Budget) => Expected::OutOfBudget,
        }
    }

    fn call(&mut self, func: usize, mut locals: Vec<i32>) -> Result<Vec<i32>, Abort> {
        if self.depth >= self.call_depth_limit {
            return Err(Abort::Trap("call_stack_exhausted"));
        }
        let def = &self.module.funcs[func];
        let n = def.ty.results.len();
        locals.resize(def.num_locals(), 0);
        self.depth += 1;
        let saved = std::mem::replace(&mut self.labels, vec![n]);
        let mut stack = Vec::new();
        let flow = self.seq(&def.body, &mut locals, &mut stack);
        self.labels = saved;
        self.depth -= 1;
        match flow? {
            Flow::Normal => Ok(top(&stack, n)),
            Flow::Br(0, v) | Flow::Return(v) => Ok(v),
            Flow::Br(k, _) => panic!("branch depth {k} escaped a function"),
        }
    }

    fn enter(
        &mut self,
        arity: usize,
        is_loop: bool,
        body: &[Instr],
        init: Vec<i32>,
        locals: &mut Vec<i32>,
        outer: &mut Vec<i32>,
    ) -> Result<Flow, Abort> {
        loop {
            self.labels.push(if is_loop { 0 } else { arity });
            let mut inner = init.clone();
            let flow = self.seq(body, locals, &mut inner);
            self.labels.pop();
            match flow? {
                Flow::Normal => {
                    outer.extend(top(&inner, arity));
                    return Ok(Flow::Normal);
                }
                Flow::Br(0, _) if is_loop => continue,
                Flow::Br(0, v) => {
                    outer.extend(v);
                    return Ok(Flow::Normal);
                }
                Flow::Br(k, v) => return Ok(Flow::Br(k - 1, v)),
                ret @ Flow::Return(_) => return Ok(ret),
            }
        }
    }

    fn seq(&mut self, body: &[Instr], locals: &mut Vec<i32>, stack: &mut Vec<i32>) -> Result<Flow, Abort> {
        use InstrKind as I;
        for instr in body {
            if self.budget == 0 {
                return Err(Abort::Budget);
            }
            self.budget -= 1;
            match &instr.kind {
                I::Const(n) => stack.push(*n),
                I::Binop(op) => {
                    let b = pop(stack);
                    let a = pop(stack);
                    stack.push(binop(*op, a, b)?);
                }
                I::Relop(op) => {
                    let b = pop(stack);
                    let a = pop(stack);
                    let r = match op {
                        RelOp::Eq => a == b,
                        RelOp::Ne => a != b,
                        RelOp::LtS => a < b,
                        RelOp::LeS => a <= b,
                        RelOp::LtU => (a as u32) < (b as u32),
                    };
                    stack.push(r as i32);
                }
                I::Eqz => {
                    let a = pop(stack);
                    stack.push((a == 0) as i32);
                }
                I::Drop => {
                    pop(stack);
                }
                I::Select => {
                    let c = pop(stack);
                    let v2 = pop(stack);
                    let v1 = pop(stack);
                    stack.push(if c != 0 { v1 } else { v2 });
                }
                I::LocalGet(i) => stack.push(locals[*i as usize]),
                I::LocalSet(i) => locals[*i as usize] = pop(stack),
                I::LocalTee(i) => locals[*i as usize] = *stack.last().unwrap(),
                I::GlobalGet(i) => stack.push(self.globals[*i as usize]),
                I::GlobalSet(i) => self.globals[*i as usize] = pop(stack),
                I::Load => {
                    let a = pop(stack) as u32 as usize;
                    if a + 4 > self.memory.len() {
                        return Err(Abort::Trap("oob_memory"));
                    }
                    stack.push(i32::from_le_bytes(self.memory[a..a + 4].try_into().unwrap()));
                }
                I::Store => {
                    let v = pop(stack);
                    let a = pop(stack) as u32 as usize;
                    if a + 4 > self.memory.len() {
                        return Err(Abort::Trap("oob_memory"));
                    }
                    self.memory[a..a + 4].copy_from_slice(&v.to_le_bytes());
                }
                I::MemorySize => stack.push((self.memory.len() / PAGE) as i32),
                I::MemoryGrow => {
                    let delta = pop(stack) as u32 as u64;
                    let old = (self.memory.len() / PAGE) as u64;
                    if old + delta <= u64::from(self.max_pages) {
                        self.memory.resize((old + delta) as usize * PAGE, 0);
                        stack.push(old as i32);
                    } else {
                        stack.push(-1);
                    }
                }
                I::Block { ty, body } => {
                    let flow = self.enter(ty.map_or(0, |_| 1), false, body, vec![], locals, stack)?;
                    if !matches!(flow, Flow::Normal) {
                        return Ok(flow);
                    }
                }
                I::Loop { ty, body } => {
                    let flow = self.enter(ty.map_or(0, |_| 1), true, body, vec![], locals, stack)?;
                    if !matches!(flow, Flow::Normal) {
                        return Ok(flow);
                    }
                }
                I::If {
                    ty,
                    then_body,
                    else_body,
                } => {
                    let arm = if pop(stack) != 0 { then_body } else { else_body };
                    let flow = self.enter(ty.map_or(0, |_| 1), false, arm, vec![], locals, stack)?;
                    if !matches!(flow, Flow::Normal) {
                        return Ok(flow);
                    }
                }
                I::TryCatch { ty, body, catch_body } => {
                    let n = ty.map_or(0, |_| 1);
                    let flow = match self.enter(n, false, body, vec![], locals, stack) {
                        Err(Abort::Throw(payload)) => self.enter(n, false, catch_body, vec![payload], locals, stack)?,
                        other => other?,
                    };
                    if !matches!(flow, Flow::Normal) {
                        return Ok(flow);
                    }
                }
                I::Br(k) => return Ok(self.br(*k, stack)),
                I::BrIf(k) => {
                    if pop(stack) != 0 {
                        return Ok(self.br(*k, stack));
                    }
                }
                I::Return => return Ok(Flow::Return(top(stack, self.labels[0]))),
                I::Call(f) => {
                    let params = self.module.funcs[*f as usize].ty.params.len();
                    let args = stack.split_off(stack.len() - params);
                    let results = self.call(*f as usize, args)?;
                    stack.extend(results);
                }
                I::Nop => {}
                I::Unreachable => return Err(Abort::Trap("unreachable")),
                I::Throw => return Err(Abort::Throw(pop(stack))),
            }
        }
        Ok(Flow::Normal)
    }

    fn br(&self, k: u32, stack: &[i32]) -> Flow {
        let arity = self.labels[self.labels.len() - 1 - k as usize];
        Flow::Br(k, top(stack, arity))
    }
}

fn pop(stack: &mut Vec<i32>) -> i32 {
    stack.pop().expect("oracle stack underflow on a validated program")
}

fn top(stack: &[i32], n: usize) -> Vec<i32> {
    stack[stack.len() - n..].to_vec()
}

fn binop(op: BinOp, a: i32, b: i32) -> Result<i32, Abort> {
    Ok(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::DivS | BinOp::RemS if b == 0 => return Err(Abort::Trap("div_by_zero")),
        BinOp::DivS if a == i32::MIN && b == -1 => return Err(Abort::Trap("int_overflow")),
        BinOp::DivS => a / b,
        BinOp::RemS if b == -1 => 0,
        BinOp::RemS => a % b,
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => ((a as u32) << (b as u32 % 32)) as i32,
        BinOp::ShrU => ((a as u32) >> (b as u32 % 32)) as i32,
    })
}
