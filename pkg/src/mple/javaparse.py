"""Adapter for a simplified Java subset.

Grammar accepted::

    file      := ('package' qualified ';')? ('import' ... ';')* class*
    class     := modifier* 'class' NAME header-tokens* '{' member* '}'
    member    := header-tokens '{' item* '}'       (method)
               | header-tokens ';'                 (field or abstract method)
    item      := tokens ';'                        (statement)
               | header-tokens '{' item* '}'       (nested block)

Semicolons inside parentheses do not end a statement, so ``for`` headers work.
Fields are kept as class attributes since classes only contain methods.
"""

from .errors import GraphParseError
from .graph import ArtifactGraph, ArtifactNode, NodeType, check_structure
from .lexer import lex

_CLASS_MODIFIERS = {"public", "private", "protected", "abstract", "final", "static"}


class _Parser:
    def __init__(self, source):
        self.toks = lex(source)
        self.pos = 0
        self.next_id = 0

    def _node(self, node_type, label="", tokens=()):
        node = ArtifactNode(self.next_id, node_type, label, tuple(tokens))
        self.next_id += 1
        return node

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def error(self, message, tok=None):
        tok = tok or self.peek() or (self.toks[-1] if self.toks else None)
        if tok is None:
            raise GraphParseError(message, 1, 1)
        raise GraphParseError(message, tok.line, tok.column)

    def parse(self, variant_id):
        root = self._node(NodeType.SYSTEM)
        container = root
        imports = []
        tok = self.peek()
        if tok is not None and tok.text == "package":
            self.pos += 1
            parts = self._until(";", "package declaration")
            pkg = self._node(NodeType.PACKAGE, "".join(t.text for t in parts))
            root.children.append(pkg)
            container = pkg
        while self.peek() is not None and self.peek().text == "import":
            self.pos += 1
            imports.append("".join(t.text for t in self._until(";", "import")))
        if imports:
            root.attributes["imports"] = ";".join(imports)
        while self.peek() is not None:
            container.children.append(self._class())
        check_structure(root)
        return ArtifactGraph.renumbered(variant_id, root)

    def _until(self, stop, what):
        start = self.pos
        depth = 0
        while True:
            tok = self.peek()
            if tok is None:
                self.error(f"missing {stop!r} after {what}", self.toks[start] if start < len(self.toks) else None)
            if tok.text in ("{", "}") and depth == 0 and stop == ";":
                self.error(f"missing ';' before {tok.text!r}", tok)
            if tok.text == "(":
                depth += 1
            elif tok.text == ")":
                depth -= 1
            elif tok.text == stop and depth <= 0:
                parts = self.toks[start:self.pos]
                self.pos += 1
                return parts
            self.pos += 1

    def _header(self):
        """Tokens up to an unparenthesized '{' or ';'; returns (tokens, terminator)."""
        start = self.pos
        depth = 0
        while True:
            tok = self.peek()
            if tok is None:
                self.error("unbalanced braces: unexpected end of input",
                           self.toks[start] if start < len(self.toks) else None)
            if tok.text == "(":
                depth += 1
            elif tok.text == ")":
                depth -= 1
            elif depth <= 0 and tok.text in ("{", ";", "}"):
                parts = self.toks[start:self.pos]
                if tok.text != "}":
                    self.pos += 1
                return parts, tok
            self.pos += 1

    def _class(self):
        start_tok = self.peek()
        header, term = self._header()
        words = [t.text for t in header]
        if "class" not in words or term.text != "{":
            self.error("expected a class declaration", start_tok)
        idx = words.index("class")
        if any(w not in _CLASS_MODIFIERS for w in words[:idx]) or idx + 1 >= len(words):
            self.error("malformed class header", start_tok)
        node = self._node(NodeType.CLASS, words[idx + 1])
        rest = words[idx + 2:]
        if rest:
            node.attributes["header"] = " ".join(rest)
        fields = []
        while True:
            tok = self.peek()
            if tok is None:
                self.error(f"unbalanced braces: class {node.label} not closed", start_tok)
            if tok.text == "}":
                self.pos += 1
                break
            mheader, mterm = self._header()
            if mterm.text == "}":
                self.error("missing ';' or '{' in class body", mterm)
            label = " ".join(t.text for t in mheader)
            is_method = any(t.text == "(" for t in mheader) and "=" not in [t.text for t in mheader]
            if mterm.text == ";":
                if is_method:
                    node.children.append(self._node(NodeType.METHOD, label))
                else:
                    fields.append(label)
                continue
            if not is_method:
                self.error("expected a method declaration", mheader[0] if mheader else mterm)
            method = self._node(NodeType.METHOD, label)
            method.children.append(self._block("", mterm))
            node.children.append(method)
        if fields:
            node.attributes["fields"] = ";".join(fields)
        return node

    def _block(self, label, open_tok):
        block = self._node(NodeType.BLOCK, label)
        while True:
            tok = self.peek()
            if tok is None:
                self.error("unbalanced braces: block not closed", open_tok)
            if tok.text == "}":
                self.pos += 1
                return block
            parts, term = self._header()
            if term.text == "}":
                self.error("missing ';' before '}'", term)
            if term.text == ";":
                stmt = self._node(NodeType.STATEMENT, "", [t.text for t in parts] + [";"])
                block.children.append(stmt)
            else:
                block.children.append(self._block(" ".join(t.text for t in parts), term))


def parse_java_subset(source: str, variant_id: str = "variant") -> ArtifactGraph:
    return _Parser(source).parse(variant_id)
