// Small end-to-end run: simulate a panel, train the detector for a few hundred
// iterations, then clean one contaminated window.
//
//   ./build/demo/quickstart [seed]

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "pcann/experiment.hpp"

using namespace pcann;

int main(int argc, char** argv) {
    const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;

    experiment::PipelineConfig cfg;
    cfg.train.max_iters = 300;
    cfg.reseed(seed);

    try {
        const auto run = experiment::run_pipeline(cfg);
        std::cout << std::fixed << std::setprecision(4);
        std::cout << "train rows " << run.data.train.rows.rows() << ", test rows " << run.data.test.rows.rows() << '\n';
        std::cout << "learned cut-off " << run.training.best.cutoff << " (best iteration " << run.training.best_iter
                  << ")\n";
        std::cout << "train F1 " << run.train.identification.f1 << ", test F1 " << run.test.identification.f1
                  << ", naive test F1 " << run.test.naive_identification.f1 << '\n';
        if (run.test.localization.all) {
            std::cout << "test localization accuracy " << run.test.localization.all->accuracy << '\n';
        }

        const auto model = run.model();
        const auto& rows = run.data.test.rows;
        for (std::size_t r = 0; r < rows.rows(); ++r) {
            if (rows.ident[r] != 1 || run.test.predicted[r] != 1) {
                continue;
            }
            const Vector x = rows.windows.row(static_cast<Eigen::Index>(r)).transpose();
            const auto rep = detector::detect_iterative(model, x);
            const int l = rep.locations.front();
            std::cout << "row " << r << ": true location " << *rows.loc[r] << ", found " << l << ", value "
                      << x[l - 1] << " -> " << rep.imputed[l - 1] << '\n';
            break;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
