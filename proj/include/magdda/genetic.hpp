#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "magdda/errors.hpp"

namespace magdda {

struct GAConfig {
    int population = 32;
    int generations = 40;
    double mutation_rate = 0.05;
    int elitism = 1;
    std::uint64_t seed = 1;
};

inline void validate(const GAConfig& c) {
    if (c.population < 2)
        throw ConfigError("GAConfig: population must be at least 2");
    if (c.mutation_rate < 0.0 || c.mutation_rate > 1.0)
        throw ConfigError("GAConfig: mutation_rate must lie in [0, 1]");
    if (c.elitism < 0 || c.elitism >= c.population)
        throw ConfigError("GAConfig: elitism must lie in [0, population)");
    if (c.generations < 1)
        throw ConfigError("GAConfig: generations must be positive");
}

template <typename Genome>
struct GaResult {
    Genome best;
    double best_fitness = std::numeric_limits<double>::infinity();
    std::vector<double> trace; // best-so-far per generation, non-increasing
};

namespace detail_ga {

/// Tournament of two: the lower (better) fitness wins.
inline std::size_t tournament(const std::vector<double>& fitness, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, fitness.size() - 1);
    const std::size_t a = pick(rng), b = pick(rng);
    return fitness[a] <= fitness[b] ? a : b;
}

template <typename Genome, typename Crossover, typename Mutate>
GaResult<Genome> evolve(std::vector<Genome> population,
                        const std::function<double(const Genome&)>& fitness_fn,
                        const GAConfig& cfg, const Crossover& crossover, const Mutate& mutate,
                        std::mt19937_64& rng) {
    GaResult<Genome> result;
    std::vector<double> fitness(population.size());
    for (std::size_t i = 0; i < population.size(); ++i)
        fitness[i] = fitness_fn(population[i]);

    const auto record_best = [&]() {
        const auto it = std::min_element(fitness.begin(), fitness.end());
        const std::size_t i = static_cast<std::size_t>(it - fitness.begin());
        if (fitness[i] < result.best_fitness) {
            result.best_fitness = fitness[i];
            result.best = population[i];
        }
        result.trace.push_back(result.best_fitness);
    };
    record_best();

    for (int gen = 0; gen < cfg.generations; ++gen) {
        std::vector<std::size_t> order(population.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return fitness[a] < fitness[b]; });
        std::vector<Genome> next;
        next.reserve(population.size());
        for (int e = 0; e < cfg.elitism; ++e)
            next.push_back(population[order[static_cast<std::size_t>(e)]]);
        while (next.size() < population.size()) {
            const Genome& p1 = population[tournament(fitness, rng)];
            const Genome& p2 = population[tournament(fitness, rng)];
            Genome child = crossover(p1, p2, rng);
            mutate(child, rng);
            next.push_back(std::move(child));
        }
        population = std::move(next);
        for (std::size_t i = 0; i < population.size(); ++i)
            fitness[i] = fitness_fn(population[i]);
        record_best();
    }
    return result;
}

} // namespace detail_ga

/// Bitmask GA (feature selection). Fitness is minimized; genomes are 0/1
/// vectors of length n_bits. `seeds` are injected into the initial
/// population verbatim.
inline GaResult<std::vector<std::uint8_t>>
ga_binary(int n_bits, const std::function<double(const std::vector<std::uint8_t>&)>& fitness_fn,
          const GAConfig& cfg, std::vector<std::vector<std::uint8_t>> seeds = {}) {
    validate(cfg);
    if (n_bits < 2)
        throw ConfigError("ga_binary: need at least 2 bits");
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::vector<std::uint8_t>> population;
    for (auto& s : seeds) {
        if (static_cast<int>(s.size()) != n_bits)
            throw ConfigError("ga_binary: seed genome length mismatch");
        if (population.size() < static_cast<std::size_t>(cfg.population))
            population.push_back(std::move(s));
    }
    std::bernoulli_distribution bit(0.5);
    while (population.size() < static_cast<std::size_t>(cfg.population)) {
        std::vector<std::uint8_t> g(static_cast<std::size_t>(n_bits));
        for (auto& v : g)
            v = bit(rng) ? 1 : 0;
        population.push_back(std::move(g));
    }
    const auto crossover = [n_bits](const std::vector<std::uint8_t>& a,
                                    const std::vector<std::uint8_t>& b, std::mt19937_64& r) {
        std::uniform_int_distribution<int> cut(1, n_bits - 1);
        const int c = cut(r);
        std::vector<std::uint8_t> child(a.begin(), a.begin() + c);
        child.insert(child.end(), b.begin() + c, b.end());
        return child;
    };
    const auto mutate = [&cfg](std::vector<std::uint8_t>& g, std::mt19937_64& r) {
        std::bernoulli_distribution flip(cfg.mutation_rate);
        for (auto& v : g)
            if (flip(r))
                v = v ? 0 : 1;
    };
    return detail_ga::evolve(std::move(population), fitness_fn, cfg, crossover, mutate, rng);
}

/// Real-coded GA on the unit box [0,1]^dim (placement search). Fitness is
/// minimized. Mutation perturbs genes with clipped Gaussian steps.
inline GaResult<Eigen::VectorXd>
ga_real(int dim, const std::function<double(const Eigen::VectorXd&)>& fitness_fn,
        const GAConfig& cfg, std::vector<Eigen::VectorXd> seeds = {}, double mutation_sigma = 0.1) {
    validate(cfg);
    if (dim < 1)
        throw ConfigError("ga_real: need at least 1 dimension");
    std::mt19937_64 rng(cfg.seed);
    std::vector<Eigen::VectorXd> population;
    for (auto& s : seeds) {
        if (s.size() != dim)
            throw ConfigError("ga_real: seed genome length mismatch");
        if (population.size() < static_cast<std::size_t>(cfg.population))
            population.push_back(std::move(s));
    }
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    while (population.size() < static_cast<std::size_t>(cfg.population)) {
        Eigen::VectorXd g(dim);
        for (int i = 0; i < dim; ++i)
            g(i) = uni(rng);
        population.push_back(std::move(g));
    }
    const auto crossover = [dim](const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                 std::mt19937_64& r) {
        Eigen::VectorXd child = a;
        if (dim > 1) {
            std::uniform_int_distribution<int> cut(1, dim - 1);
            const int c = cut(r);
            child.tail(dim - c) = b.tail(dim - c);
        } else if (std::uniform_int_distribution<int>(0, 1)(r)) {
            child = b;
        }
        return child;
    };
    const auto mutate = [&cfg, mutation_sigma](Eigen::VectorXd& g, std::mt19937_64& r) {
        std::bernoulli_distribution act(cfg.mutation_rate);
        std::normal_distribution<double> step(0.0, mutation_sigma);
        for (int i = 0; i < g.size(); ++i)
            if (act(r))
                g(i) = std::clamp(g(i) + step(r), 0.0, 1.0);
    };
    return detail_ga::evolve(std::move(population), fitness_fn, cfg, crossover, mutate, rng);
}

} // namespace magdda
