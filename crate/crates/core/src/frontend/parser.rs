//! Recursive-descent parser for the query subset:
//!
//! ```text
//! query   := select { UNION ALL select } [;]
//! select  := SELECT items FROM ident { [INNER] JOIN ident ON colref = colref { AND colref = colref } }
//!            [ WHERE expr ]
//! items   := * | item { , item }
//! item    := expr [ [AS] ident ]
//! expr    := or ;  or := and { OR and } ;  and := not { AND not } ;  not := [NOT] cmp
//! cmp     := sum [ (= | != | <> | < | <= | > | >=) sum | IN ( literal { , literal } ) ]
//! sum     := term { (+ | -) term } ;  term := unary { (* | /) unary } ;  unary := [-] primary
//! primary := number | string | TRUE | FALSE | colref | ( expr )
//!          | PREDICT ( ident { , colref } )
//!          | CASE WHEN expr THEN expr { WHEN expr THEN expr } ELSE expr END
//! colref  := ident [ . ident ]
//! ```

use super::lexer::{tokenize, Tok, Token};
use crate::error::{Error, Result};
use crate::ir::{ArithOp, CmpOp, Literal, ScalarExpr};

#[derive(Clone, Debug, PartialEq)]
pub struct SelectItem {
    pub expr: ScalarExpr,
    pub alias: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JoinClause {
    pub table: String,
    pub on: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Select {
    /// `None` for `*`.
    pub items: Option<Vec<SelectItem>>,
    pub from: String,
    pub joins: Vec<JoinClause>,
    pub selection: Option<ScalarExpr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub blocks: Vec<Select>,
}

pub fn parse_query(text: &str) -> Result<Query> {
    if text.trim().is_empty() {
        return Err(Error::Syntax {
            line: 1,
            column: 1,
            message: "empty query".into(),
        });
    }
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let mut blocks = vec![p.select()?];
    while p.eat_kw("UNION") {
        if !p.eat_kw("ALL") {
            return Err(Error::Unsupported("UNION without ALL".into()));
        }
        blocks.push(p.select()?);
    }
    p.eat(&Tok::Semicolon);
    if p.peek() != &Tok::Eof {
        return Err(p.unexpected("end of query"));
    }
    Ok(Query { blocks })
}

/// Parses a standalone scalar expression.
pub fn parse_expr(text: &str) -> Result<ScalarExpr> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    if p.peek() != &Tok::Eof {
        return Err(p.unexpected("end of expression"));
    }
    Ok(e)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

fn unsupported_keyword(k: &str) -> Option<&'static str> {
    Some(match k {
        "LEFT" | "RIGHT" | "FULL" | "OUTER" => "OUTER JOIN",
        "CROSS" => "CROSS JOIN",
        "GROUP" => "GROUP BY",
        "ORDER" => "ORDER BY",
        "HAVING" => "HAVING",
        "LIMIT" | "OFFSET" => "LIMIT/OFFSET",
        "DISTINCT" => "DISTINCT",
        "WITH" => "WITH (common table expression)",
        "EXISTS" => "EXISTS subquery",
        "BETWEEN" => "BETWEEN",
        "LIKE" => "LIKE",
        "INTERSECT" | "EXCEPT" => "set operation other than UNION ALL",
        "NULL" | "IS" => "NULL literal/IS NULL",
        _ => return None,
    })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if matches!(self.peek(), Tok::Keyword(w) if *w == k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn syntax(&self, message: String) -> Error {
        let t = &self.toks[self.pos];
        Error::Syntax {
            line: t.line,
            column: t.column,
            message,
        }
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Keyword(k) => format!("keyword {k}"),
            Tok::Number(v) => format!("number {v}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", symbol(other)),
        }
    }

    fn unexpected(&self, expected: &str) -> Error {
        if let Tok::Keyword(k) = self.peek() {
            if let Some(what) = unsupported_keyword(k) {
                return Error::Unsupported(what.into());
            }
        }
        if self.peek() == &Tok::LParen && matches!(self.peek_at(1), Tok::Keyword("SELECT")) {
            return Error::Unsupported("subquery".into());
        }
        self.syntax(format!("expected {expected}, found {}", Self::describe(self.peek())))
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            Err(self.unexpected(k))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn colref(&mut self) -> Result<String> {
        let first = self.ident("column name")?;
        if self.eat(&Tok::Dot) {
            let second = self.ident("column name after `.`")?;
            Ok(format!("{first}.{second}"))
        } else {
            Ok(first)
        }
    }

    fn select(&mut self) -> Result<Select> {
        self.expect_kw("SELECT")?;
        let items = if self.eat(&Tok::Star) {
            None
        } else {
            let mut items = vec![self.item()?];
            while self.eat(&Tok::Comma) {
                items.push(self.item()?);
            }
            Some(items)
        };
        self.expect_kw("FROM")?;
        let from = self.table()?;
        if self.peek() == &Tok::Comma {
            return Err(Error::Unsupported("comma join (use JOIN ... ON)".into()));
        }
        let mut joins = Vec::new();
        loop {
            let inner = self.eat_kw("INNER");
            if !self.eat_kw("JOIN") {
                if inner {
                    return Err(self.unexpected("JOIN"));
                }
                break;
            }
            let table = self.table()?;
            self.expect_kw("ON")?;
            let mut on = vec![self.join_condition()?];
            while self.eat_kw("AND") {
                on.push(self.join_condition()?);
            }
            joins.push(JoinClause { table, on });
        }
        let selection = if self.eat_kw("WHERE") {
            Some(self.expr()?)
        } else {
            None
        };
        if let Tok::Keyword(k) = self.peek() {
            if let Some(what) = unsupported_keyword(k) {
                return Err(Error::Unsupported(what.into()));
            }
        }
        Ok(Select {
            items,
            from,
            joins,
            selection,
        })
    }

    fn table(&mut self) -> Result<String> {
        if self.peek() == &Tok::LParen {
            return Err(Error::Unsupported("subquery".into()));
        }
        self.ident("table name")
    }

    fn join_condition(&mut self) -> Result<(String, String)> {
        let a = self.colref()?;
        if !self.eat(&Tok::Eq) {
            return Err(Error::Unsupported("non-equi join condition".into()));
        }
        let b = self.colref()?;
        Ok((a, b))
    }

    fn item(&mut self) -> Result<SelectItem> {
        let expr = self.expr()?;
        let alias = if self.eat_kw("AS") {
            Some(self.ident("alias")?)
        } else if let Tok::Ident(s) = self.peek().clone() {
            self.bump();
            Some(s)
        } else {
            None
        };
        Ok(SelectItem { expr, alias })
    }

    fn expr(&mut self) -> Result<ScalarExpr> {
        let mut e = self.and()?;
        while self.eat_kw("OR") {
            e = ScalarExpr::Or(Box::new(e), Box::new(self.and()?));
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<ScalarExpr> {
        let mut e = self.not()?;
        while self.eat_kw("AND") {
            e = ScalarExpr::And(Box::new(e), Box::new(self.not()?));
        }
        Ok(e)
    }

    fn not(&mut self) -> Result<ScalarExpr> {
        if self.eat_kw("NOT") {
            return Ok(ScalarExpr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<ScalarExpr> {
        let left = self.sum()?;
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::NotEq => CmpOp::NotEq,
            Tok::Lt => CmpOp::Lt,
            Tok::LtEq => CmpOp::LtEq,
            Tok::Gt => CmpOp::Gt,
            Tok::GtEq => CmpOp::GtEq,
            Tok::Keyword("IN") => {
                self.bump();
                self.expect(&Tok::LParen, "`(` after IN")?;
                if matches!(self.peek(), Tok::Keyword("SELECT")) {
                    return Err(Error::Unsupported("subquery".into()));
                }
                let mut list = vec![self.literal()?];
                while self.eat(&Tok::Comma) {
                    list.push(self.literal()?);
                }
                self.expect(&Tok::RParen, "`)` closing the IN list")?;
                return Ok(ScalarExpr::InList {
                    expr: Box::new(left),
                    list,
                });
            }
            _ => return Ok(left),
        };
        self.bump();
        let right = self.sum()?;
        Ok(ScalarExpr::compare(op, left, right))
    }

    fn literal(&mut self) -> Result<Literal> {
        let negative = self.eat(&Tok::Minus);
        match (self.peek().clone(), negative) {
            (Tok::Number(v), _) => {
                self.bump();
                Ok(Literal::num(if negative { -v } else { v }))
            }
            (Tok::Str(s), false) => {
                self.bump();
                Ok(Literal::Str(s))
            }
            (Tok::Keyword("TRUE"), false) => {
                self.bump();
                Ok(Literal::Bool(true))
            }
            (Tok::Keyword("FALSE"), false) => {
                self.bump();
                Ok(Literal::Bool(false))
            }
            _ => Err(self.unexpected("literal")),
        }
    }

    fn sum(&mut self) -> Result<ScalarExpr> {
        let mut e = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(e),
            };
            self.bump();
            e = ScalarExpr::arith(op, e, self.term()?);
        }
    }

    fn term(&mut self) -> Result<ScalarExpr> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(e),
            };
            self.bump();
            e = ScalarExpr::arith(op, e, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<ScalarExpr> {
        if self.eat(&Tok::Minus) {
            return Ok(match self.unary()? {
                ScalarExpr::Literal(Literal::Num(v)) => ScalarExpr::Literal(Literal::num(-v)),
                other => ScalarExpr::arith(ArithOp::Sub, ScalarExpr::Literal(Literal::num(0.0)), other),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<ScalarExpr> {
        match self.peek().clone() {
            Tok::Number(v) => {
                self.bump();
                Ok(ScalarExpr::Literal(Literal::num(v)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(ScalarExpr::Literal(Literal::Str(s)))
            }
            Tok::Keyword("TRUE") => {
                self.bump();
                Ok(ScalarExpr::Literal(Literal::Bool(true)))
            }
            Tok::Keyword("FALSE") => {
                self.bump();
                Ok(ScalarExpr::Literal(Literal::Bool(false)))
            }
            Tok::Ident(_) => {
                if self.peek_at(1) == &Tok::LParen {
                    let name = self.ident("function")?;
                    return Err(Error::Unsupported(format!("function call `{name}`")));
                }
                Ok(ScalarExpr::Column(self.colref()?))
            }
            Tok::LParen => {
                if matches!(self.peek_at(1), Tok::Keyword("SELECT")) {
                    return Err(Error::Unsupported("subquery".into()));
                }
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Keyword("PREDICT") => {
                self.bump();
                self.expect(&Tok::LParen, "`(` after PREDICT")?;
                let model = self.ident("model name")?;
                let mut args = Vec::new();
                while self.eat(&Tok::Comma) {
                    args.push(self.colref()?);
                }
                self.expect(&Tok::RParen, "`)` closing PREDICT")?;
                Ok(ScalarExpr::ModelCall { model, args })
            }
            Tok::Keyword("CASE") => {
                self.bump();
                let mut branches = Vec::new();
                while self.eat_kw("WHEN") {
                    let c = self.expr()?;
                    self.expect_kw("THEN")?;
                    branches.push((c, self.expr()?));
                }
                if branches.is_empty() {
                    return Err(self.unexpected("WHEN"));
                }
                if !self.eat_kw("ELSE") {
                    return Err(Error::Unsupported("CASE without ELSE".into()));
                }
                let otherwise = Box::new(self.expr()?);
                self.expect_kw("END")?;
                Ok(ScalarExpr::Case { branches, otherwise })
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

fn symbol(t: &Tok) -> &'static str {
    match t {
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::Comma => ",",
        Tok::Dot => ".",
        Tok::Star => "*",
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Slash => "/",
        Tok::Eq => "=",
        Tok::NotEq => "!=",
        Tok::Lt => "<",
        Tok::LtEq => "<=",
        Tok::Gt => ">",
        Tok::GtEq => ">=",
        Tok::Semicolon => ";",
        _ => "?",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{col, num};

    #[test]
    fn parses_joins_and_where() {
        let q = parse_query(
            "SELECT id, PREDICT(M, age, bp) AS los FROM patient_info \
             JOIN blood_tests ON patient_info.id = blood_tests.id WHERE pregnant = 1",
        )
        .unwrap();
        let b = &q.blocks[0];
        assert_eq!(b.joins[0].on, vec![("patient_info.id".into(), "blood_tests.id".into())]);
        assert_eq!(b.selection, Some(col("pregnant").eq(num(1.0))));
        assert_eq!(b.items.as_ref().unwrap()[1].alias.as_deref(), Some("los"));
    }

    #[test]
    fn rejects_unsupported_constructs() {
        for (q, what) in [
            ("SELECT a FROM t GROUP BY a", "GROUP BY"),
            ("SELECT a FROM t LEFT JOIN u ON t.a = u.a", "OUTER JOIN"),
            ("SELECT a FROM (SELECT a FROM t)", "subquery"),
            ("SELECT a FROM t WHERE a IN (SELECT b FROM u)", "subquery"),
        ] {
            match parse_query(q) {
                Err(Error::Unsupported(c)) => assert_eq!(c, what, "{q}"),
                other => panic!("{q}: {other:?}"),
            }
        }
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_query("SELECT a FROM t WHERE a <") {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (1, 26)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_literals_fold() {
        assert_eq!(parse_expr("x > -2.5").unwrap(), col("x").gt(num(-2.5)));
    }
}
