//! Builds the consensus matrices of the default five-agent network and
//! prints their spectra.

use dzoa::topology::{ConsensusMatrices, Graph};

fn main() -> dzoa::Result<()> {
    let graph = Graph::default_five_agent();
    for k in 0..graph.num_agents() {
        let nbrs: Vec<_> = graph.neighbors(k).map(|j| j + 1).collect();
        println!("agent {} degree {} neighbors {:?}", k + 1, graph.degree(k), nbrs);
    }
    let m = ConsensusMatrices::build(&graph, 1)?;
    println!("L+ =\n{:.0}", m.l_plus);
    println!("L- =\n{:.0}", m.l_minus);
    println!("lambda_max(L+) = {:.6}", m.lambda_max_l_plus);
    println!("smallest nonzero lambda(L-) = {:.6}", m.lambda_min_nonzero_l_minus);

    // with P > 1 every entry becomes a P x P block
    let big = ConsensusMatrices::build(&graph, 10)?;
    println!("block size 10: H is {}x{}", big.h.nrows(), big.h.ncols());
    Ok(())
}
