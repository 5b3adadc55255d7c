use hypcode::symbolic::*;

fn main() {
    let mut g = MarkovGraph::new();
    g.add_edge("a", "b");
    g.add_edge("b", "a");
    g.add_edge("a", "a");
    let a = g.vertex("a").unwrap();
    let b = g.vertex("b").unwrap();
    // p: core [b,a,b], past [a], future [a,b], origin 0
    let p = SymbolPath::new(&g, Tail::Cycle(vec![a]), vec![b, a, b], Tail::Cycle(vec![a, b]), 0).unwrap();
    // q: core [b,a,a], past [a], future [b,a], origin 2
    let q = SymbolPath::new(&g, Tail::Cycle(vec![a]), vec![b, a, a], Tail::Cycle(vec![b, a]), 2).unwrap();
    // r: core [a,b,a], past [a], future [b,a], origin 2
    let r = SymbolPath::new(&g, Tail::Cycle(vec![a]), vec![a, b, a], Tail::Cycle(vec![b, a]), 2).unwrap();
    let roof = RoofFunction::constant(1.0);
    let (t1, t2, t3) = (0.0, 0.8367435026411674, 0.7346828310094439);
    let z1 = SuspensionPoint::new(&roof, p.clone(), t1).unwrap();
    let z2 = SuspensionPoint::new(&roof, q.clone(), t2).unwrap();
    let z3 = SuspensionPoint::new(&roof, r.clone(), t3).unwrap();
    let d12 = bowen_walters_distance(&roof, &z1, &z2).unwrap();
    let d23 = bowen_walters_distance(&roof, &z2, &z3).unwrap();
    let d13 = bowen_walters_distance(&roof, &z1, &z3).unwrap();
    println!("d12 {} d23 {} d13 {} sum {}", d12, d23, d13, d12 + d23);
    println!("violation: {}", d13 - (d12 + d23));
    for (nm, x, y) in [("pq", &p, &q), ("qr", &q, &r), ("pr", &p, &r)] {
        println!("D({}) = {}  D(shift) = {}", nm, path_distance(x, y), path_distance(&x.shift(1), &y.shift(1)));
    }
}
