// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
// HTTP render service. Handlers are plain member functions so they can be
// exercised without a socket; bind() / run() put them behind httplib.
//
//   GET  /render?yaw=&pitch=&seed=&size=&blend=   PNG of the current params
//   GET  /semantic?...                            class-argmax PNG
//   GET  /params                                  current params JSON
//   POST /params                                  merge a fragment, 204
//   GET  /meta                                    config summary JSON
//   GET  /                                        viewer bundle
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "morphvol/scene.hpp"

namespace morphvol {

struct HttpResponse {
    int status = 200;
    std::string content_type;
    std::string body;
};

using Query = std::map<std::string, std::string>;

struct ServiceOptions {
    bool deterministic = true;
    std::uint64_t seed = 0;
    std::filesystem::path static_dir;  // served at / when it holds index.html
    int max_size = 512;
};

class RenderService {
public:
    RenderService(std::shared_ptr<const PortraitModel> model, ServiceOptions opt);
    RenderService(std::shared_ptr<const PortraitModel> model, ServiceOptions opt, ControlParams initial);
    ~RenderService();
    RenderService(const RenderService&) = delete;
    RenderService& operator=(const RenderService&) = delete;

    HttpResponse render(const Query& q) const;
    HttpResponse semantic(const Query& q) const;
    HttpResponse get_params() const;
    HttpResponse post_params(const std::string& body);
    HttpResponse meta() const;
    HttpResponse index() const;

    /// Current immutable snapshot; POST /params swaps it atomically.
    std::shared_ptr<const ControlParams> params() const;

    /// Binds host:port (port 0 picks a free one) and returns the bound port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); returns false if the listener failed.
    bool run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace morphvol
