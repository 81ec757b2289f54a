"""Prompt templates and the special tokens of the multi-turn protocol.

Templates are byte-stable: tests snapshot them, and scripted fixtures are
keyed on the exact text, so any edit here invalidates recorded fixtures.
"""

from __future__ import annotations

from typing import Sequence

THINK_OPEN, THINK_CLOSE = "<think>", "</think>"
ANSWER_OPEN, ANSWER_CLOSE = "<answer>", "</answer>"
SEARCH_OPEN, SEARCH_CLOSE = "<search>", "</search>"
REFS_OPEN, REFS_CLOSE = "<references>", "</references>"
BOXED = "\\boxed"

SYSTEM_THINK = ("As you answer each question, you must provide a thought process and "
                "insert it between < think > and </think>.")

DECOMPOSITION = """\
You are an expert in function calls, capable of accurately understanding function definitions and precisely decompose user queries to select appropriate functions to solve problems. The functions are as follows:
Function Name: Retrieval
    Description: Search for SPO information. S stands for subject, O stands for object, represented as variable_name...
    Function Usage: Retrieval(s=s_alias:type[`name'], p=p_alias:edge, o=o_alias:type[name], p.prop=`value', s.prop=`value', o.prop=`value')
Function Name: Math
    Description: Perform calculations, which include set operations such as numerical calculations or sorting...
    Function Usage: Math(content=[`known conditions' or `o_alias/s_alias'], target=`goal to be solved')->math_alias
Function Name: Deduce
    Description: Inference refers to the process of inferring search or calculation results to answer questions...
    Function Usage: Deduce(op=judgement|entailment|extract|choice|multiChoice, content=[`known conditions' or `o_alias/s_alias'], target=`goal to be solved')->deduce_alias
Function Name: Output
    Description: Directly output A, B, ... as the answer, where A and B are variable names referencing previous...
    Function Usage: Output(A,B,...)
Please, based on the definition of the above function, decompose the user question into one or multiple logical steps, outputting the execution plan for each step along with the corresponding action. Please note:
Step: Accurately point out the logical thinking process of the question, and use #1 to refer to the solution result of Step1, #2 to refer to the solution result of Step2, and so on
Action: Indicate exactly the function you selected and its parameters.
Question:
{question}
Output:
"""

DIRECT_ATTEMPT = (
    "Can you answer the following questions step by step? If you can, wrap your answer with "
    "<answer>\\boxed{{your answer}}</answer>. If you can't, just reply that based on my internal "
    "knowledge, I can't answer this question, I need to retrieve external knowledge. \n"
    "Question: \n{question}"
)

ASSESS = """\
Analyze whether the answer to the following question is correct?
Please think step-by-step before arriving at your conclusion.
If yes, answer True; if no, answer False.
Wrap your answer with <answer>\\boxed{{True/False}}</answer>.
Question: {question}
Answer: {answer}"""

FOCUS = """\
According to the question and references, analyze the relationship between each reference and the question, then summarize whether these references can answer the above questions and give reasons. Wrap the answer and the corresponding reasons in <answer>Yes/No</answer> and <reason>your reason</reason>.
References:
{references}
Question: {question}
Output:
"""

FOCUS_NOTE = "\nReference analysis: {verdict}. {reason}"

REASK = ("Your last reply contained neither a valid <search> directive nor an <answer>. "
         "Reply with <search>StepN: ...\nActionN: ...</search> to retrieve, or "
         "<answer>\\boxed{your answer}</answer> to answer.")

ANSWER_NOW = ("The retrieval budget is exhausted. Based on the references so far, answer the "
              "question now and wrap the result with <answer>\\boxed{your answer}</answer>.")

SYNTHETIC_SEARCH_THINK = ("The direct answer could not be verified with enough confidence, "
                          "I need to retrieve external knowledge.")

DEDUCE = (
    "Answer the last question based on question, the first n sub-questions and their answers "
    "(indicated by #n), and wrap the result with <answer>\\boxed{{your answer}}</answer>. \n"
    "question:\n{question}\n"
    "sub-questions:\n{history}\n"
    "last-question:\n{step}\n"
    "operation: {op}\n"
    "content:\n{content}\n"
    "target: {target}\n"
    "answer:\n"
)

DEDUCE_OP_HINTS = {
    "extract": "extract the requested information from the content",
    "judgement": "judge whether the target holds; answer True or False",
    "entailment": "infer what the content logically entails for the target",
    "choice": "choose exactly one candidate, copied verbatim from the question or content",
    "multiChoice": "choose one or more candidates copied verbatim, separated by '; '",
}

MATH = (
    "Convert the calculation below into a single arithmetic expression over literal numbers. "
    "Use only + - * / parentheses and the functions min, max and sum. If the result has a unit, "
    "write the unit after the expression. Wrap it with <answer>\\boxed{{expression}}</answer>. \n"
    "question:\n{question}\n"
    "content:\n{content}\n"
    "target: {target}\n"
    "expression:\n"
)

JUDGE = (
    "Decide whether the two answers below to the same question are consistent, i.e. they "
    "express the same final answer. Wrap your verdict with <answer>\\boxed{{True/False}}</answer>.\n"
    "Question: {question}\n"
    "Answer A: {a}\n"
    "Answer B: {b}"
)


def decomposition(question: str) -> str:
    return DECOMPOSITION.format(question=question)


def direct_attempt(question_block: str) -> str:
    return DIRECT_ATTEMPT.format(question=question_block)


def assess(question: str, answer: str) -> str:
    return ASSESS.format(question=question, answer=answer)


def step_block(index: int, nl_text: str, action_text: str) -> str:
    return f"Step{index}: {nl_text}\nAction{index}: {action_text}"


def bullet_list(values: Sequence[str]) -> str:
    return "\n".join(f"- {v}" for v in values) if values else "- (none)"
