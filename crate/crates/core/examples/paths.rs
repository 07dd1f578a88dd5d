//! Transitive closure of a small graph.

use cr_core::{Fact, HandlerBuilder, TypeTag::Str, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut h = HandlerBuilder::new("paths");
    let [edge, path] = h.symbols(["edge", "path"]);
    let [x, y, z] = h.symbols(["X", "Y", "Z"]);
    h.constraint(edge, [Str, Str]);
    h.constraint(path, [Str, Str]);

    h.when(path, [x, y]).and(path, [x, y]).passive().keep().named("path-known");
    h.when(edge, [x, y]).keep().then(path, [x, y]).named("edge-is-path");
    h.when(path, [x, y]).keep().and(edge, [y, z]).keep().then(path, [x, z]).named("extend-path");
    h.when(edge, [y, z]).keep().and(path, [x, y]).keep().then(path, [x, z]).named("extend-edge");
    let mut handler = h.build()?;

    for (from, to) in [("a", "b"), ("b", "c"), ("c", "a"), ("c", "d")] {
        handler.tell(Fact::new("edge", [from, to], [] as [Value; 0]))?;
    }
    for fact in handler.select("path")? {
        println!("{fact}");
    }
    Ok(())
}
