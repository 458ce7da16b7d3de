// thermoctl: command-line front end for the thermo library.
//
// Every subcommand accepts --config FILE (key = value lines) and one --key
// flag per setting; flags override the file.

#include <iostream>
#include <map>
#include <string>

// Eigen must come before httplib: <resolv.h> defines a _res macro.
#include "thermo/cli.hpp"

#include "CLI11.hpp"
#include "httplib.h"

namespace {

struct Bound {
  std::string config_file;
  std::map<std::string, std::string> values;
};

void add_options(CLI::App* sub, Bound& b, const std::vector<thermo::cli::Option>& opts) {
  sub->add_option("--config", b.config_file, "key = value settings file");
  for (const auto& o : opts) sub->add_option("--" + o.key, b.values[o.key], o.help);
}

thermo::Config merge(const Bound& b, const CLI::App* sub) {
  thermo::Config cfg = b.config_file.empty() ? thermo::Config{} : thermo::Config::load(b.config_file);
  for (const auto& [k, v] : b.values) {
    if (sub->count("--" + k) > 0) cfg.set(k, v);
  }
  return cfg;
}

int serve(thermo::Config cfg) {
  const auto state = thermo::cli::load_serve_state(cfg);
  const auto bind = cfg.resolve<std::string>("bind", "127.0.0.1");
  const auto port = cfg.resolve<std::int64_t>("port", 8080);
  httplib::Server svr;
  svr.Post("/predict", [&](const httplib::Request& req, httplib::Response& res) {
    const auto r = thermo::cli::handle_predict(state, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  svr.Get("/health", [&](const httplib::Request&, httplib::Response& res) {
    const auto r = thermo::cli::handle_health(state);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  std::cerr << "serving " << state.predictors.size() << " host models on " << bind << ":" << port << "\n";
  if (!svr.listen(bind, static_cast<int>(port))) {
    std::cerr << "error: cannot listen on " << bind << ":" << port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermal-aware scheduling toolkit"};
  app.require_subcommand(1);
  const auto& table = thermo::cli::commands();
  std::map<std::string, Bound> bound;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : table) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_options(sub, bound[c.name], c.options);
    subs[c.name] = sub;
  }
  auto* serve_cmd = app.add_subcommand("serve", "answer temperature queries over HTTP");
  add_options(serve_cmd, bound["serve"],
              {{"models", "model directory"},
               {"bind", "listen address"},
               {"port", "listen port"},
               {"guard.enabled", "1 to apply the prediction guard"},
               {"guard.margin", "guard margin, C"}});

  CLI11_PARSE(app, argc, argv);

  try {
    if (serve_cmd->parsed()) return serve(merge(bound["serve"], serve_cmd));
    for (const auto& c : table) {
      if (subs[c.name]->parsed()) c.run(merge(bound[c.name], subs[c.name]), std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
